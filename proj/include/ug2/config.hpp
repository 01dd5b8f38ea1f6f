#pragma once

#include <cstdint>
#include <string>

#include "ug2/errors.hpp"

namespace ug2 {

enum class AggregatorKind { mean, gat };

inline AggregatorKind parse_aggregator(const std::string& s) {
  if (s == "mean") return AggregatorKind::mean;
  if (s == "gat") return AggregatorKind::gat;
  throw ConfigError("unknown aggregator kind '" + s + "' (mean|gat)");
}

inline const char* aggregator_name(AggregatorKind k) {
  return k == AggregatorKind::mean ? "mean" : "gat";
}

/// Pre-training configuration. Hidden sizes not listed here derive from the
/// data: d_in is the fused feature width, expert hidden defaults to d_in,
/// gating hidden to d_in/2, SPD head hidden to d_hidden.
struct TrainConfig {
  double mask_rate = 0.8;
  uint32_t d_hidden = 64;
  double lr = 1e-3;
  double weight_decay = 0.01;
  double dropout = 0.4;
  uint32_t epochs = 5;
  uint32_t num_gnn_layers = 4;
  uint32_t ppr_topk = 256;
  uint32_t num_experts = 8;
  double lambda = 0.1;
  double gamma = 2.0;
  double alpha_ppr = 0.15;
  double epsilon_ppr = 1e-4;
  uint32_t spd_anchors = 16;
  uint32_t spd_pairs_per_node = 4;
  uint32_t spd_dmax = 10;
  uint32_t steps_per_epoch_per_graph = 200;
  uint64_t seed = 0;
  AggregatorKind aggregator = AggregatorKind::gat;

  uint32_t expert_hidden = 0;    // 0: use d_in
  uint32_t gating_hidden = 0;    // 0: use max(1, d_in/2)
  uint32_t spd_head_hidden = 0;  // 0: use d_hidden
  bool use_adapters = true;
  double grad_clip = 5.0;  // <= 0 disables
  // Graphs above this node count are embedded per PPR subgraph at inference.
  uint32_t full_graph_threshold = 50000;

  void validate() const {
    if (mask_rate < 0.0 || mask_rate > 1.0)
      throw ValidationError("mask_rate must be in [0,1]");
    if (lambda < 0.0) throw ValidationError("lambda must be >= 0");
    if (gamma < 1.0) throw ValidationError("gamma must be >= 1");
    if (d_hidden == 0 || num_gnn_layers == 0 || ppr_topk == 0 ||
        num_experts == 0 || epochs == 0 || steps_per_epoch_per_graph == 0 ||
        spd_anchors == 0)
      throw ValidationError("counts must be positive");
    if (alpha_ppr <= 0.0 || alpha_ppr >= 1.0)
      throw ValidationError("alpha_ppr must be in (0,1)");
    if (epsilon_ppr <= 0.0) throw ValidationError("epsilon_ppr must be > 0");
    if (dropout < 0.0 || dropout >= 1.0)
      throw ValidationError("dropout must be in [0,1)");
  }
};

}  // namespace ug2
