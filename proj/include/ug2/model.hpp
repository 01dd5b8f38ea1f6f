#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ug2/config.hpp"
#include "ug2/encoders.hpp"
#include "ug2/graph.hpp"
#include "ug2/sampling.hpp"
#include "ug2/tensor.hpp"

namespace ug2 {

/// Two-layer perceptron, relu hidden, linear output.
struct Mlp2 {
  TensorPtr w1, b1, w2, b2;
  TensorPtr forward(const TensorPtr& x) const;
};

/// One message-passing layer. mean kind:
///   h' = W_self h_i + W_neigh mean_{j in N(i) ∪ {i}} h_j + b
/// gat kind (single head, shared W):
///   s_ij = leaky_relu(a^T [W h_i || W h_j], 0.2) over j in N(i) ∪ {i}
///   h'_i = sum_j softmax_j(s_ij) W h_j
/// relu is applied by the caller on all but the final layer.
struct GnnLayer {
  AggregatorKind kind = AggregatorKind::mean;
  TensorPtr w_self, w_neigh, bias;  // mean
  TensorPtr w, att;                 // gat

  TensorPtr forward(const TensorPtr& h, const CsrGraph& g) const;
};

struct DomainSpec {
  std::string domain_id;
  uint32_t d_in = 0;  // fused feature width of that domain
};

struct ModelConfig {
  uint32_t d_in = 32;
  uint32_t d_hidden = 64;
  uint32_t num_experts = 8;
  uint32_t num_gnn_layers = 4;
  uint32_t expert_hidden = 0;    // 0 -> d_in
  uint32_t gating_hidden = 0;    // 0 -> max(1, d_in/2)
  uint32_t spd_head_hidden = 0;  // 0 -> d_hidden
  bool use_adapters = true;
  AggregatorKind aggregator = AggregatorKind::gat;

  static ModelConfig from_train(const TrainConfig& t, uint32_t d_in) {
    ModelConfig m;
    m.d_in = d_in;
    m.d_hidden = t.d_hidden;
    m.num_experts = t.num_experts;
    m.num_gnn_layers = t.num_gnn_layers;
    m.expert_hidden = t.expert_hidden;
    m.gating_hidden = t.gating_hidden;
    m.spd_head_hidden = t.spd_head_hidden;
    m.use_adapters = t.use_adapters;
    m.aggregator = t.aggregator;
    return m;
  }
};

/// All trainable state. Mask token, gating, experts, encoder, and the SPD
/// head are shared across domains; adapters and decoders are per-domain.
struct ModelParams {
  ModelConfig cfg;
  TensorPtr mask_token;          // d_in, zero-initialized
  Mlp2 gating;                   // d_in -> gating_hidden -> K
  std::vector<Mlp2> experts;     // d_in -> expert_hidden -> d_hidden
  std::vector<GnnLayer> encoder; // L layers, d_hidden -> d_hidden
  std::map<std::string, Mlp2> adapters;      // linear d_in -> d_in (w1/b1 only)
  std::map<std::string, GnnLayer> decoders;  // one layer d_hidden -> d_in
  Mlp2 spd_head;                 // 2*d_hidden -> spd_head_hidden -> 1

  static ModelParams init(const ModelConfig& cfg,
                          const std::vector<DomainSpec>& domains, uint64_t seed);

  /// Stable-order registry of every parameter tensor.
  std::vector<std::pair<std::string, TensorPtr>> named_params() const;
  /// Registry indices of shared parameters plus the given domain's adapter
  /// and decoder (the set one training step may update).
  std::vector<size_t> param_group(const std::string& domain_id) const;

  bool has_domain(const std::string& domain_id) const {
    return decoders.count(domain_id) > 0;
  }
};

// ---- forward pieces ----

TensorPtr apply_mask(const TensorPtr& features, const std::vector<uint32_t>& mask_set,
                     const TensorPtr& mask_token);

struct MoeResult {
  TensorPtr mixed;         // |V| x d_hidden
  TensorPtr gate_weights;  // |V| x K, rows sum to 1
};

/// Dense routing: every expert evaluated, mixed by softmax gating weights.
MoeResult moe_align(const TensorPtr& x, const ModelParams& p);

/// Per-domain learned linear map before the shared gating; identity for
/// unknown domains or when adapters are disabled.
TensorPtr apply_adapter(const TensorPtr& x, const ModelParams& p,
                        const std::string& domain_id);

/// L layers with relu + dropout between layers (train mode only), nothing
/// after the final layer.
TensorPtr gnn_forward(const TensorPtr& e, const CsrGraph& g,
                      const std::vector<GnnLayer>& layers, double dropout_rate,
                      bool train_mode, uint64_t dropout_seed);

TensorPtr decode_features(const TensorPtr& h, const CsrGraph& g,
                          const std::string& domain_id, const ModelParams& p);

TensorPtr spd_scores(const TensorPtr& h, const std::vector<SpdPair>& pairs,
                     const ModelParams& p);

// ---- inference ----

struct EmbeddingSet {
  std::string graph_id;
  std::vector<uint32_t> ids;
  TensorPtr vectors;  // |ids| x d_hidden

  std::span<const double> row(size_t i) const {
    return {vectors->data.data() + i * vectors->cols(), vectors->cols()};
  }
};

/// Encode -> fuse -> adapter -> MoE -> GNN, no masking, no dropout. Graphs
/// above cfg.full_graph_threshold are embedded one PPR subgraph per node
/// (seed row taken), parallelized up to UG2_THREADS workers.
EmbeddingSet infer_embeddings(const MultimodalGraph& g, const ModelParams& p,
                              const std::vector<ModalityEncoder>& encoders,
                              const TrainConfig& cfg);

/// Forward over an already fused feature matrix (inference mode).
EmbeddingSet infer_from_fused(const MultimodalGraph& g, const FeatureMatrix& fused,
                              const ModelParams& p, const TrainConfig& cfg);

// ---- checkpoints ----
// Layout: "UG2C" magic, u32 version, u64 JSON header length, JSON header
// (config, domain list, frozen encoder specs, tensor directory with shapes
// in payload order), then concatenated f64 little-endian payloads.
// Byte-exact reload.
struct Checkpoint {
  ModelParams params;
  std::vector<ModalityEncoder> encoders;
};

void save_checkpoint(const std::string& path, const ModelParams& p,
                     const std::vector<ModalityEncoder>& encoders = {});
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ug2
