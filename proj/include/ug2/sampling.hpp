#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ug2/config.hpp"
#include "ug2/graph.hpp"
#include "ug2/tensor.hpp"

namespace ug2 {

/// Approximate Personalized PageRank from one seed, with residual
/// bookkeeping. On return every residual satisfies r(u) < epsilon*deg(u)
/// (and is exactly 0 on isolated nodes), which bounds the per-node error
/// against exact PPR by epsilon*deg(v).
struct PprVector {
  uint32_t seed = 0;
  double alpha = 0.15;
  double epsilon = 1e-4;
  std::unordered_map<uint32_t, double> scores;
  std::unordered_map<uint32_t, double> residuals;
  uint64_t push_count = 0;  // bounded by 1/(alpha*epsilon)
};

PprVector ppr_push(const CsrGraph& g, uint32_t seed, double alpha,
                   double epsilon);

/// Seed plus the top-(k-1) nodes by PPR score (ties broken by ascending
/// node id), with the induced local graph. global_ids ascending; the map
/// local->global is the vector itself.
struct InducedSubgraph {
  std::vector<uint32_t> global_ids;
  CsrGraph local;
  uint32_t seed_local = 0;
};

InducedSubgraph topk_subgraph(const CsrGraph& g, const PprVector& ppr,
                              uint32_t k);

struct SpdPair {
  uint32_t i = 0, j = 0;
  float dist = 0.0f;
};

/// BFS hop counts from each anchor to every node; -1 marks unreachable.
struct SpdTable {
  std::vector<uint32_t> anchors;
  std::vector<int32_t> dist;  // anchors.size() x num_nodes, row-major
  uint32_t num_nodes = 0;

  int32_t at(size_t a, uint32_t v) const { return dist[a * num_nodes + v]; }
};

SpdTable bfs_from_anchors(const CsrGraph& g, const std::vector<uint32_t>& anchors);

/// Seeded anchor choice + BFS; emits reachable (anchor, node) pairs with
/// hop count <= d_max, subsampled to pairs_per_node * |V| when larger.
std::vector<SpdPair> spd_targets(const CsrGraph& sub, uint32_t num_anchors,
                                 uint32_t pairs_per_node, uint32_t d_max,
                                 uint64_t seed);

/// One optimization unit: induced PPR subgraph, local fused features,
/// mask set, and SPD regression targets.
struct SubgraphBatch {
  std::string domain_id;
  CsrGraph local;
  std::vector<uint32_t> global_ids;
  TensorPtr fused;  // |V_sub| x d_in, no grad
  std::vector<uint32_t> mask_set;
  std::vector<SpdPair> spd_pairs;
  uint32_t seed_local = 0;
};

SubgraphBatch make_batch(const MultimodalGraph& g, const FeatureMatrix& fused,
                         uint32_t seed_node, const TrainConfig& cfg,
                         uint64_t rng_seed);

}  // namespace ug2
