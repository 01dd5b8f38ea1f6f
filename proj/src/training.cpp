#include "ug2/training.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "ug2/rng.hpp"

namespace ug2 {

using nlohmann::json;

std::string metrics_to_json(const MetricsRecord& m) {
  json j = {{"step", m.step},          {"epoch", m.epoch},
            {"domain_id", m.domain_id}, {"loss_feat", m.loss_feat},
            {"loss_spd", m.loss_spd},   {"loss_total", m.loss_total},
            {"grad_norm", m.grad_norm}, {"wall_ms", m.wall_ms}};
  return j.dump();
}

TensorPtr feature_loss(const TensorPtr& x, const TensorPtr& z, double gamma) {
  if (x->rows() == 0 || z->rows() == 0 || x->numel() == 0)
    throw ContractError("feature_loss: empty mask set (loss undefined)");
  if (x->shape != z->shape)
    throw ShapeError("feature_loss: shape mismatch " + shape_str(x->shape) +
                     " vs " + shape_str(z->shape));
  if (gamma < 1.0) throw ContractError("feature_loss: gamma must be >= 1");
  auto nx = clamp_min(l2norm_rows(x), 1e-12);
  auto nz = clamp_min(l2norm_rows(z), 1e-12);
  auto cos = div(rowwise_dot(x, z), mul(nx, nz));
  return mean_all(pow_scalar(sub(1.0, cos), gamma));
}

TensorPtr spd_loss(const TensorPtr& pred, const std::vector<float>& targets) {
  if (targets.empty()) {
    std::cerr << "[ug2] warning: no SPD pairs sampled, structural loss is 0\n";
    return scalar(0.0);
  }
  if (pred->numel() != targets.size())
    throw ShapeError("spd_loss: " + std::to_string(pred->numel()) +
                     " predictions vs " + std::to_string(targets.size()) +
                     " targets");
  std::vector<double> t(targets.begin(), targets.end());
  return mse(pred, tensor(pred->shape, std::move(t)));
}

StepLosses forward_losses(const SubgraphBatch& batch, const ModelParams& params,
                          const TrainConfig& cfg, uint64_t dropout_seed) {
  if (!params.has_domain(batch.domain_id))
    throw ConfigError("train: domain '" + batch.domain_id + "' not registered");

  auto masked = apply_mask(batch.fused, batch.mask_set, params.mask_token);
  auto inp = apply_adapter(masked, params, batch.domain_id);
  auto moe = moe_align(inp, params);
  auto h = gnn_forward(moe.mixed, batch.local, params.encoder, cfg.dropout,
                       /*train_mode=*/true, dropout_seed);

  StepLosses out;
  auto z = decode_features(h, batch.local, batch.domain_id, params);
  auto originals = gather_rows(batch.fused, batch.mask_set);
  auto recon = gather_rows(z, batch.mask_set);
  out.feat = feature_loss(originals, recon, cfg.gamma);

  std::vector<float> targets;
  targets.reserve(batch.spd_pairs.size());
  for (const auto& p : batch.spd_pairs) targets.push_back(p.dist);
  if (batch.spd_pairs.empty()) {
    out.spd = spd_loss(scalar(0.0), targets);
    out.total = out.feat;
    return out;
  }
  out.spd = spd_loss(spd_scores(h, batch.spd_pairs, params), targets);
  out.total = cfg.lambda > 0.0 ? add(out.feat, mul(out.spd, cfg.lambda))
                               : out.feat;
  return out;
}

MetricsRecord train_step(const SubgraphBatch& batch, ModelParams& params,
                         AdamWState& opt, const TrainConfig& cfg,
                         uint64_t step_seed, int64_t step, int32_t epoch) {
  const auto t0 = std::chrono::steady_clock::now();
  MetricsRecord rec;
  rec.step = step;
  rec.epoch = epoch;
  rec.domain_id = batch.domain_id;
  try {
    Tape tape;
    auto losses = forward_losses(batch, params, cfg, mix_seed(step_seed, 0xd0));
    rec.loss_feat = losses.feat->value();
    rec.loss_spd = losses.spd->value();
    rec.loss_total = losses.total->value();
    tape.backward(losses.total);
  } catch (const NumericError& e) {
    throw NumericError("train_step aborted at step " + std::to_string(step) +
                       " (domain " + batch.domain_id + ", feat " +
                       std::to_string(rec.loss_feat) + ", spd " +
                       std::to_string(rec.loss_spd) + "): " + e.what());
  }

  auto named = params.named_params();
  auto group = params.param_group(batch.domain_id);
  std::vector<TensorPtr> group_tensors;
  group_tensors.reserve(group.size());
  for (size_t idx : group) group_tensors.push_back(named[idx].second);
  rec.grad_norm = clip_grad_norm(group_tensors, cfg.grad_clip);
  // Decoder gradients exist only for the batch domain; other domains'
  // decoders are left untouched (bitwise, no decay, no moment update).
  for (size_t idx : group) named[idx].second->ensure_grad();
  opt.step(group);

  rec.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  return rec;
}

PretrainResult pretrain(const std::vector<MultimodalGraph>& graphs,
                        const std::vector<ModalityEncoder>& encoders,
                        const TrainConfig& cfg, const PretrainOptions& opts) {
  cfg.validate();
  if (graphs.empty()) throw ContractError("pretrain: need at least one graph");

  // frozen encoders run once per graph
  std::vector<FeatureMatrix> fused;
  uint32_t d_in = 0;
  std::vector<DomainSpec> domains;
  for (const auto& g : graphs) {
    if (!d_in) {
      for (const auto& e : encoders) {
        if (d_in && e.out_dim != d_in)
          throw ConfigError("encoders disagree on out_dim");
        d_in = e.out_dim;
      }
      if (!d_in) throw ConfigError("pretrain: no encoders given");
    }
    fused.push_back(encode_and_fuse(g, encoders, d_in, cfg.seed));
    for (const auto& d : domains)
      if (d.domain_id == g.domain_id)
        throw ConfigError("duplicate domain '" + g.domain_id + "'");
    domains.push_back({g.domain_id, d_in});
  }

  PretrainResult result;
  result.params = ModelParams::init(ModelConfig::from_train(cfg, d_in), domains,
                                    mix_seed(cfg.seed, hash_str("init")));
  AdamWConfig ocfg;
  ocfg.lr = cfg.lr;
  ocfg.weight_decay = cfg.weight_decay;
  AdamWState opt(result.params.named_params(), ocfg);

  if (!opts.checkpoint_dir.empty())
    std::filesystem::create_directories(opts.checkpoint_dir);

  Rng rng(mix_seed(cfg.seed, hash_str("loop")));
  int64_t step = 0;
  for (uint32_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (uint32_t s = 0; s < cfg.steps_per_epoch_per_graph; ++s) {
      for (size_t gi = 0; gi < graphs.size(); ++gi) {
        const uint32_t seed_node =
            uint32_t(rng.index(graphs[gi].graph.num_nodes));
        const uint64_t batch_seed = rng.next_u64();
        auto batch =
            make_batch(graphs[gi], fused[gi], seed_node, cfg, batch_seed);
        auto rec = train_step(batch, result.params, opt, cfg,
                              mix_seed(batch_seed, 0x57e9), ++step,
                              int32_t(epoch));
        if (opts.on_step) opts.on_step(rec);
        result.metrics.push_back(std::move(rec));
      }
    }
    if (!opts.checkpoint_dir.empty()) {
      const std::string path = opts.checkpoint_dir + "/ckpt_epoch" +
                               std::to_string(epoch);
      save_checkpoint(path, result.params, encoders);
      result.checkpoint_paths.push_back(path);
    }
  }
  if (!opts.checkpoint_dir.empty()) {
    const std::string path = opts.checkpoint_dir + "/ckpt_final";
    save_checkpoint(path, result.params, encoders);
    result.checkpoint_paths.push_back(path);
  }
  return result;
}

}  // namespace ug2
