#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ug2/config.hpp"
#include "ug2/encoders.hpp"
#include "ug2/model.hpp"
#include "ug2/sampling.hpp"

namespace ug2 {

struct MetricsRecord {
  int64_t step = 0;
  int32_t epoch = 0;
  std::string domain_id;
  double loss_feat = 0.0;
  double loss_spd = 0.0;
  double loss_total = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
};

std::string metrics_to_json(const MetricsRecord& m);

/// (1/|M|) sum (1 - cos(x_i, z_i))^gamma, norms clamped at 1e-12.
TensorPtr feature_loss(const TensorPtr& x, const TensorPtr& z, double gamma);

/// Mean squared error over sampled pairs; empty input returns plain 0 and
/// logs a warning (subgraph too small to sample pairs).
TensorPtr spd_loss(const TensorPtr& pred, const std::vector<float>& targets);

struct StepLosses {
  TensorPtr total, feat, spd;
};

/// Forward through mask -> adapter -> MoE -> encoder -> {decoder, SPD head}
/// and assemble total = feat + lambda * spd. Records onto the active tape.
StepLosses forward_losses(const SubgraphBatch& batch, const ModelParams& params,
                          const TrainConfig& cfg, uint64_t dropout_seed);

/// One optimization step on one subgraph batch. Only shared parameters and
/// the batch domain's adapter/decoder are updated.
MetricsRecord train_step(const SubgraphBatch& batch, ModelParams& params,
                         AdamWState& opt, const TrainConfig& cfg,
                         uint64_t step_seed, int64_t step, int32_t epoch);

struct PretrainResult {
  ModelParams params;
  std::vector<MetricsRecord> metrics;
  std::vector<std::string> checkpoint_paths;
};

struct PretrainOptions {
  // Directory for per-epoch checkpoints (ckpt_epoch<N>) and the final one
  // (ckpt_final); empty disables checkpointing.
  std::string checkpoint_dir;
  // Called after each step (metrics streaming).
  std::function<void(const MetricsRecord&)> on_step;
};

/// Round-robin cross-domain pre-training: every step draws a uniform seed
/// node from the current graph, builds a PPR subgraph batch, and runs one
/// train_step. Deterministic in (graphs, cfg.seed).
PretrainResult pretrain(const std::vector<MultimodalGraph>& graphs,
                        const std::vector<ModalityEncoder>& encoders,
                        const TrainConfig& cfg,
                        const PretrainOptions& opts = {});

}  // namespace ug2
