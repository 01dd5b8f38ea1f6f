#include "ug2/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "ug2/rng.hpp"

namespace ug2 {

using nlohmann::json;

namespace {

TensorPtr xavier(size_t fan_in, size_t fan_out, std::vector<size_t> shape,
                 Rng& rng) {
  const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
  size_t n = 1;
  for (size_t d : shape) n *= d;
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-limit, limit);
  return tensor(std::move(shape), std::move(v), true);
}

Mlp2 make_mlp(size_t in, size_t hidden, size_t out, Rng& rng) {
  Mlp2 m;
  m.w1 = xavier(in, hidden, {in, hidden}, rng);
  m.b1 = zeros({hidden}, true);
  m.w2 = xavier(hidden, out, {hidden, out}, rng);
  m.b2 = zeros({out}, true);
  return m;
}

GnnLayer make_gnn_layer(AggregatorKind kind, size_t in, size_t out, Rng& rng) {
  GnnLayer l;
  l.kind = kind;
  if (kind == AggregatorKind::mean) {
    l.w_self = xavier(in, out, {in, out}, rng);
    l.w_neigh = xavier(in, out, {in, out}, rng);
    l.bias = zeros({out}, true);
  } else {
    l.w = xavier(in, out, {in, out}, rng);
    l.att = xavier(2 * out, 1, {2 * out, 1}, rng);
  }
  return l;
}

void collect_mlp(const std::string& prefix, const Mlp2& m,
                 std::vector<std::pair<std::string, TensorPtr>>& out) {
  out.emplace_back(prefix + ".w1", m.w1);
  out.emplace_back(prefix + ".b1", m.b1);
  if (m.w2) out.emplace_back(prefix + ".w2", m.w2);
  if (m.b2) out.emplace_back(prefix + ".b2", m.b2);
}

void collect_gnn(const std::string& prefix, const GnnLayer& l,
                 std::vector<std::pair<std::string, TensorPtr>>& out) {
  if (l.kind == AggregatorKind::mean) {
    out.emplace_back(prefix + ".w_self", l.w_self);
    out.emplace_back(prefix + ".w_neigh", l.w_neigh);
    out.emplace_back(prefix + ".bias", l.bias);
  } else {
    out.emplace_back(prefix + ".w", l.w);
    out.emplace_back(prefix + ".att", l.att);
  }
}

}  // namespace

TensorPtr Mlp2::forward(const TensorPtr& x) const {
  auto h = relu(add_rowvec(matmul(x, w1), b1));
  return add_rowvec(matmul(h, w2), b2);
}

TensorPtr GnnLayer::forward(const TensorPtr& h, const CsrGraph& g) const {
  if (kind == AggregatorKind::mean) {
    auto self = matmul(h, w_self);
    auto nm = matmul(neighbor_mean(h, g.offsets, g.targets), w_neigh);
    return add_rowvec(add(self, nm), bias);
  }
  // gat: attention over N(i) ∪ {i}, entries grouped contiguously per node
  const uint32_t n = g.num_nodes;
  std::vector<uint32_t> center, nbr;
  std::vector<uint64_t> seg(n + 1, 0);
  center.reserve(n + g.targets.size());
  nbr.reserve(n + g.targets.size());
  for (uint32_t i = 0; i < n; ++i) {
    center.push_back(i);
    nbr.push_back(i);
    for (uint32_t j : g.neighbors(i)) {
      center.push_back(i);
      nbr.push_back(j);
    }
    seg[i + 1] = nbr.size();
  }
  auto wh = matmul(h, w);
  auto hc = gather_rows(wh, std::move(center));
  auto hn = gather_rows(wh, std::move(nbr));
  auto scores = leaky_relu(matmul(concat_cols(hc, hn), att), 0.2);
  auto weights = segment_softmax(scores, seg);
  return segment_sum(scale_rows(hn, weights), std::move(seg));
}

ModelParams ModelParams::init(const ModelConfig& cfg,
                              const std::vector<DomainSpec>& domains,
                              uint64_t seed) {
  if (cfg.num_experts == 0) throw ConfigError("num_experts must be >= 1");
  if (cfg.num_gnn_layers == 0) throw ConfigError("num_gnn_layers must be >= 1");
  ModelParams p;
  p.cfg = cfg;
  const uint32_t he = cfg.expert_hidden ? cfg.expert_hidden : cfg.d_in;
  const uint32_t hg = cfg.gating_hidden ? cfg.gating_hidden
                                        : std::max(1u, cfg.d_in / 2);
  const uint32_t hs = cfg.spd_head_hidden ? cfg.spd_head_hidden : cfg.d_hidden;

  p.mask_token = zeros({cfg.d_in}, true);
  {
    Rng rng(mix_seed(seed, hash_str("gating")));
    p.gating = make_mlp(cfg.d_in, hg, cfg.num_experts, rng);
  }
  for (uint32_t k = 0; k < cfg.num_experts; ++k) {
    Rng rng(mix_seed(seed, mix_seed(hash_str("expert"), k)));
    p.experts.push_back(make_mlp(cfg.d_in, he, cfg.d_hidden, rng));
  }
  for (uint32_t l = 0; l < cfg.num_gnn_layers; ++l) {
    Rng rng(mix_seed(seed, mix_seed(hash_str("encoder"), l)));
    p.encoder.push_back(
        make_gnn_layer(cfg.aggregator, cfg.d_hidden, cfg.d_hidden, rng));
  }
  for (const auto& d : domains) {
    if (d.d_in != 0 && d.d_in != cfg.d_in)
      throw ConfigError("domain '" + d.domain_id + "' fused width " +
                        std::to_string(d.d_in) + " != model d_in " +
                        std::to_string(cfg.d_in));
    if (p.decoders.count(d.domain_id))
      throw ConfigError("duplicate domain '" + d.domain_id + "'");
    if (cfg.use_adapters) {
      Rng rng(mix_seed(seed, mix_seed(hash_str("adapter"), hash_str(d.domain_id))));
      Mlp2 a;  // single linear layer: w1/b1 only
      a.w1 = xavier(cfg.d_in, cfg.d_in, {cfg.d_in, cfg.d_in}, rng);
      a.b1 = zeros({cfg.d_in}, true);
      p.adapters[d.domain_id] = std::move(a);
    }
    Rng rng(mix_seed(seed, mix_seed(hash_str("decoder"), hash_str(d.domain_id))));
    p.decoders[d.domain_id] =
        make_gnn_layer(cfg.aggregator, cfg.d_hidden, cfg.d_in, rng);
  }
  {
    Rng rng(mix_seed(seed, hash_str("spd_head")));
    p.spd_head = make_mlp(2 * size_t(cfg.d_hidden), hs, 1, rng);
  }
  return p;
}

std::vector<std::pair<std::string, TensorPtr>> ModelParams::named_params() const {
  std::vector<std::pair<std::string, TensorPtr>> out;
  out.emplace_back("mask_token", mask_token);
  collect_mlp("gating", gating, out);
  for (size_t k = 0; k < experts.size(); ++k)
    collect_mlp("expert" + std::to_string(k), experts[k], out);
  for (size_t l = 0; l < encoder.size(); ++l)
    collect_gnn("encoder" + std::to_string(l), encoder[l], out);
  for (const auto& [dom, a] : adapters) {  // std::map: sorted, stable
    out.emplace_back("adapter." + dom + ".w", a.w1);
    out.emplace_back("adapter." + dom + ".b", a.b1);
  }
  for (const auto& [dom, dec] : decoders) collect_gnn("decoder." + dom, dec, out);
  collect_mlp("spd_head", spd_head, out);
  return out;
}

std::vector<size_t> ModelParams::param_group(const std::string& domain_id) const {
  auto named = named_params();
  std::vector<size_t> idx;
  for (size_t i = 0; i < named.size(); ++i) {
    const std::string& name = named[i].first;
    const bool adapter = name.rfind("adapter.", 0) == 0;
    const bool decoder = name.rfind("decoder.", 0) == 0;
    if (!adapter && !decoder) {
      idx.push_back(i);
      continue;
    }
    const std::string key = adapter ? "adapter." + domain_id + "."
                                    : "decoder." + domain_id + ".";
    if (name.rfind(key, 0) == 0) idx.push_back(i);
  }
  return idx;
}

TensorPtr apply_mask(const TensorPtr& features,
                     const std::vector<uint32_t>& mask_set,
                     const TensorPtr& mask_token) {
  return apply_mask_rows(features, mask_set, mask_token);
}

MoeResult moe_align(const TensorPtr& x, const ModelParams& p) {
  if (x->cols() != p.cfg.d_in)
    throw ShapeError("moe_align: input width " + std::to_string(x->cols()) +
                     " != d_in " + std::to_string(p.cfg.d_in));
  MoeResult r;
  r.gate_weights = softmax(p.gating.forward(x));
  for (size_t k = 0; k < p.experts.size(); ++k) {
    auto mixed_k = scale_rows(p.experts[k].forward(x), select_col(r.gate_weights, k));
    r.mixed = k == 0 ? mixed_k : add(r.mixed, mixed_k);
  }
  return r;
}

TensorPtr apply_adapter(const TensorPtr& x, const ModelParams& p,
                        const std::string& domain_id) {
  auto it = p.adapters.find(domain_id);
  if (it == p.adapters.end()) return x;
  return add_rowvec(matmul(x, it->second.w1), it->second.b1);
}

TensorPtr gnn_forward(const TensorPtr& e, const CsrGraph& g,
                      const std::vector<GnnLayer>& layers, double dropout_rate,
                      bool train_mode, uint64_t dropout_seed) {
  if (layers.empty()) throw ContractError("gnn_forward: no layers");
  TensorPtr h = e;
  for (size_t l = 0; l < layers.size(); ++l) {
    h = layers[l].forward(h, g);
    if (l + 1 < layers.size()) {
      h = relu(h);
      if (train_mode && dropout_rate > 0.0)
        h = dropout(h, dropout_rate, mix_seed(dropout_seed, l));
    }
  }
  return h;
}

TensorPtr decode_features(const TensorPtr& h, const CsrGraph& g,
                          const std::string& domain_id, const ModelParams& p) {
  auto it = p.decoders.find(domain_id);
  if (it == p.decoders.end()) {
    std::string known;
    for (const auto& [dom, dec] : p.decoders) known += (known.empty() ? "" : ", ") + dom;
    throw ConfigError("decode_features: unknown domain '" + domain_id +
                      "' (registered: " + known + ")");
  }
  return it->second.forward(h, g);
}

TensorPtr spd_scores(const TensorPtr& h, const std::vector<SpdPair>& pairs,
                     const ModelParams& p) {
  std::vector<uint32_t> li, rj;
  li.reserve(pairs.size());
  rj.reserve(pairs.size());
  for (const auto& pr : pairs) {
    li.push_back(pr.i);
    rj.push_back(pr.j);
  }
  auto cat = concat_cols(gather_rows(h, std::move(li)), gather_rows(h, std::move(rj)));
  return p.spd_head.forward(cat);
}

namespace {

TensorPtr fused_to_tensor(const FeatureMatrix& fused) {
  std::vector<double> v(fused.data.begin(), fused.data.end());
  return tensor({fused.rows, fused.cols}, std::move(v));
}

TensorPtr forward_inference(const TensorPtr& x, const CsrGraph& g,
                            const ModelParams& p, const std::string& domain_id) {
  NoGrad ng;
  auto inp = apply_adapter(x, p, domain_id);
  auto moe = moe_align(inp, p);
  return gnn_forward(moe.mixed, g, p.encoder, 0.0, false, 0);
}

unsigned worker_count() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("UG2_THREADS")) {
    try {
      unsigned cap = unsigned(std::stoul(env));
      if (cap >= 1) hw = std::min(hw, cap);
    } catch (const std::exception&) {
      throw ConfigError("UG2_THREADS must be a positive integer");
    }
  }
  return hw;
}

}  // namespace

EmbeddingSet infer_from_fused(const MultimodalGraph& g, const FeatureMatrix& fused,
                              const ModelParams& p, const TrainConfig& cfg) {
  if (fused.cols != p.cfg.d_in)
    throw ConfigError("infer: fused width " + std::to_string(fused.cols) +
                      " does not match model d_in " + std::to_string(p.cfg.d_in));
  EmbeddingSet out;
  out.graph_id = g.domain_id;
  out.ids.resize(g.graph.num_nodes);
  for (uint32_t i = 0; i < g.graph.num_nodes; ++i) out.ids[i] = i;

  if (g.graph.num_nodes <= cfg.full_graph_threshold) {
    out.vectors = forward_inference(fused_to_tensor(fused), g.graph, p, g.domain_id);
    return out;
  }

  // Node-centric path for large graphs: one PPR subgraph per node, seed row
  // kept. Rows are independent, so chunked workers write disjoint slices.
  const uint32_t n = g.graph.num_nodes;
  const uint32_t d = p.cfg.d_hidden;
  auto vectors = zeros({n, d});
  const unsigned workers = worker_count();
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex err_mu;
  auto run_range = [&](uint32_t lo, uint32_t hi) {
    try {
      for (uint32_t v = lo; v < hi; ++v) {
        auto ppr = ppr_push(g.graph, v, cfg.alpha_ppr, cfg.epsilon_ppr);
        auto sub = topk_subgraph(g.graph, ppr, cfg.ppr_topk);
        const uint32_t ns = uint32_t(sub.global_ids.size());
        std::vector<double> feat(size_t(ns) * fused.cols);
        for (uint32_t i = 0; i < ns; ++i)
          for (uint32_t j = 0; j < fused.cols; ++j)
            feat[size_t(i) * fused.cols + j] = fused.at(sub.global_ids[i], j);
        auto x = tensor({ns, fused.cols}, std::move(feat));
        auto h = forward_inference(x, sub.local, p, g.domain_id);
        std::copy_n(&h->data[size_t(sub.seed_local) * d], d,
                    &vectors->data[size_t(v) * d]);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lk(err_mu);
      if (!first_error) first_error = std::current_exception();
    }
  };
  const uint32_t chunk = (n + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const uint32_t lo = std::min(n, w * chunk), hi = std::min(n, (w + 1) * chunk);
    if (lo < hi) pool.emplace_back(run_range, lo, hi);
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
  out.vectors = vectors;
  return out;
}

EmbeddingSet infer_embeddings(const MultimodalGraph& g, const ModelParams& p,
                              const std::vector<ModalityEncoder>& encoders,
                              const TrainConfig& cfg) {
  auto fused = encode_and_fuse(g, encoders, p.cfg.d_in, cfg.seed);
  return infer_from_fused(g, fused, p, cfg);
}

// ---- checkpoints ----

namespace {

constexpr char kCkptMagic[4] = {'U', 'G', '2', 'C'};

json model_config_json(const ModelConfig& cfg) {
  return {{"d_in", cfg.d_in},
          {"d_hidden", cfg.d_hidden},
          {"num_experts", cfg.num_experts},
          {"num_gnn_layers", cfg.num_gnn_layers},
          {"expert_hidden", cfg.expert_hidden},
          {"gating_hidden", cfg.gating_hidden},
          {"spd_head_hidden", cfg.spd_head_hidden},
          {"use_adapters", cfg.use_adapters},
          {"aggregator", aggregator_name(cfg.aggregator)}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.d_in = j.at("d_in").get<uint32_t>();
  cfg.d_hidden = j.at("d_hidden").get<uint32_t>();
  cfg.num_experts = j.at("num_experts").get<uint32_t>();
  cfg.num_gnn_layers = j.at("num_gnn_layers").get<uint32_t>();
  cfg.expert_hidden = j.at("expert_hidden").get<uint32_t>();
  cfg.gating_hidden = j.at("gating_hidden").get<uint32_t>();
  cfg.spd_head_hidden = j.at("spd_head_hidden").get<uint32_t>();
  cfg.use_adapters = j.at("use_adapters").get<bool>();
  cfg.aggregator = parse_aggregator(j.at("aggregator").get<std::string>());
  return cfg;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& p,
                     const std::vector<ModalityEncoder>& encoders) {
  auto named = p.named_params();
  json header;
  header["format_version"] = 1;
  header["model"] = model_config_json(p.cfg);
  header["domains"] = json::array();
  for (const auto& [dom, dec] : p.decoders) header["domains"].push_back(dom);
  header["encoders"] = json::array();
  for (const auto& e : encoders)
    header["encoders"].push_back({{"name", e.name},
                                  {"kind", encoder_kind_name(e.kind)},
                                  {"out_dim", e.out_dim},
                                  {"channels", e.channels},
                                  {"seed", e.seed}});
  header["tensors"] = json::array();
  for (const auto& [name, t] : named)
    header["tensors"].push_back({{"name", name}, {"shape", t->shape}});

  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint " + path);
  os.write(kCkptMagic, 4);
  const uint32_t version = 1;
  os.write(reinterpret_cast<const char*>(&version), 4);
  const std::string hs = header.dump();
  const uint64_t hlen = hs.size();
  os.write(reinterpret_cast<const char*>(&hlen), 8);
  os.write(hs.data(), std::streamsize(hs.size()));
  for (const auto& [name, t] : named)
    os.write(reinterpret_cast<const char*>(t->data.data()),
             std::streamsize(t->data.size() * sizeof(double)));
  if (!os) throw IoError("short write to checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kCkptMagic, 4) != 0)
    throw FormatError(path + ": bad checkpoint magic");
  uint32_t version = 0;
  is.read(reinterpret_cast<char*>(&version), 4);
  if (version != 1)
    throw FormatError(path + ": unsupported checkpoint version " +
                      std::to_string(version));
  uint64_t hlen = 0;
  is.read(reinterpret_cast<char*>(&hlen), 8);
  std::string hs(hlen, '\0');
  if (!is.read(hs.data(), std::streamsize(hlen)))
    throw FormatError(path + ": truncated header");
  json header;
  try {
    header = json::parse(hs);
  } catch (const json::exception& e) {
    throw FormatError(path + ": header parse: " + std::string(e.what()));
  }

  ModelConfig cfg = model_config_from_json(header.at("model"));
  std::vector<DomainSpec> domains;
  for (const auto& d : header.at("domains"))
    domains.push_back({d.get<std::string>(), cfg.d_in});
  Checkpoint ckpt;
  ckpt.params = ModelParams::init(cfg, domains, 0);
  if (header.contains("encoders")) {
    for (const auto& je : header.at("encoders")) {
      ModalityEncoder e;
      e.name = je.at("name").get<std::string>();
      e.kind = parse_encoder_kind(je.at("kind").get<std::string>());
      e.out_dim = je.at("out_dim").get<uint32_t>();
      e.channels = je.at("channels").get<uint32_t>();
      e.seed = je.at("seed").get<uint64_t>();
      ckpt.encoders.push_back(std::move(e));
    }
  }

  auto named = ckpt.params.named_params();
  const auto& dir = header.at("tensors");
  if (dir.size() != named.size())
    throw FormatError(path + ": tensor directory size mismatch");
  for (size_t i = 0; i < named.size(); ++i) {
    const auto& entry = dir.at(i);
    if (entry.at("name").get<std::string>() != named[i].first)
      throw FormatError(path + ": tensor order mismatch at '" + named[i].first + "'");
    const auto shape = entry.at("shape").get<std::vector<size_t>>();
    if (shape != named[i].second->shape)
      throw FormatError(path + ": shape mismatch for '" + named[i].first + "'");
    if (!is.read(reinterpret_cast<char*>(named[i].second->data.data()),
                 std::streamsize(named[i].second->data.size() * sizeof(double))))
      throw FormatError(path + ": truncated payload at '" + named[i].first + "'");
  }
  return ckpt;
}

}  // namespace ug2
