#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ug2/errors.hpp"

namespace ug2 {

/// Undirected graph in CSR form. Storage is symmetric (both directions
/// present) with self-loops stripped; GNN layers add the self contribution
/// themselves.
struct CsrGraph {
  uint32_t num_nodes = 0;
  std::vector<uint64_t> offsets;  // num_nodes + 1
  std::vector<uint32_t> targets;

  // Symmetrizes, deduplicates, and drops self-loops.
  static CsrGraph from_edges(uint32_t num_nodes,
                             const std::vector<std::pair<uint32_t, uint32_t>>& edges);

  uint32_t degree(uint32_t v) const {
    check_node(v);
    return uint32_t(offsets[v + 1] - offsets[v]);
  }
  std::span<const uint32_t> neighbors(uint32_t v) const {
    check_node(v);
    return {targets.data() + offsets[v], targets.data() + offsets[v + 1]};
  }
  uint64_t undirected_edge_count() const { return targets.size() / 2; }

  // Unique undirected pairs (u < v), sorted.
  std::vector<std::pair<uint32_t, uint32_t>> edge_list() const;

  void validate() const;

 private:
  void check_node(uint32_t v) const {
    if (v >= num_nodes)
      throw ContractError("node id " + std::to_string(v) + " out of range [0," +
                          std::to_string(num_nodes) + ")");
  }
};

struct FeatureMatrix {
  uint32_t rows = 0;
  uint32_t cols = 0;
  std::vector<float> data;  // row-major

  float at(uint32_t r, uint32_t c) const { return data[size_t(r) * cols + c]; }
  std::span<const float> row(uint32_t r) const {
    return {data.data() + size_t(r) * cols, cols};
  }
  void validate() const;
};

/// Raw per-modality payload: numeric features or one text line per node.
using RawFeatures = std::variant<FeatureMatrix, std::vector<std::string>>;

struct ModalityData {
  std::string name;
  RawFeatures raw;
  std::vector<uint8_t> presence;  // one 0/1 flag per node
};

struct Splits {
  std::vector<uint32_t> train, val, test;
  bool empty() const { return train.empty() && val.empty() && test.empty(); }
};

struct MultimodalGraph {
  CsrGraph graph;
  std::string domain_id;
  std::vector<ModalityData> modalities;
  std::vector<int32_t> labels;  // empty when absent
  int32_t num_classes = 0;
  Splits splits;

  bool has_labels() const { return !labels.empty(); }
  // Every node must carry at least one modality; masks sized to the graph.
  void validate() const;
};

// ---- file formats ----
FeatureMatrix read_mmgf(const std::string& path);
void write_mmgf(const std::string& path, const FeatureMatrix& fm);

// Edge list: first line "#nodes=<N>", then "src<TAB>dst" per line.
std::pair<uint32_t, std::vector<std::pair<uint32_t, uint32_t>>> read_edge_list(
    const std::string& path);
void write_edge_list(const std::string& path, const CsrGraph& g);

MultimodalGraph load_graph(const std::string& edge_path,
                           const std::string& manifest_path);

/// Writes edge list, per-modality features/presence, labels, splits, and the
/// manifest under dir. Returns (edge_path, manifest_path).
std::pair<std::string, std::string> write_graph(const MultimodalGraph& g,
                                                const std::string& dir);

// ---- synthetic multimodal graphs ----
struct SynthConfig {
  uint32_t num_nodes = 600;
  uint32_t num_communities = 3;
  double p_in = 0.05;
  double p_out = 0.005;
  std::vector<uint32_t> dims = {40, 28};  // one entry per modality
  double noise_sigma = 0.3;
  double p_missing = 0.0;  // modalities beyond the first
  uint64_t seed = 0;
  // Per-class split sizes for downstream probes; remaining nodes go to test.
  uint32_t train_per_class = 20;
  uint32_t val_per_class = 30;

  void validate() const;
};

/// Planted-community graph: block-model topology, community-mean features
/// with Gaussian noise per modality, labels = community ids. Deterministic
/// under seed.
MultimodalGraph synth_mmg(const SynthConfig& cfg);

}  // namespace ug2
