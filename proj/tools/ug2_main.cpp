// ug2 — self-supervised pre-training and evaluation for multimodal graphs.
// Subcommands: synth, pretrain, embed, probe, fewshot, linkpred, gradcheck,
// ppr. Machine-readable JSON goes to stdout, human logs to stderr.
// Exit codes: 0 success, 1 I/O, 2 validation, 3 numeric abort.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ug2/encoders.hpp"
#include "ug2/eval.hpp"
#include "ug2/gradcheck.hpp"
#include "ug2/graph.hpp"
#include "ug2/model.hpp"
#include "ug2/rng.hpp"
#include "ug2/sampling.hpp"
#include "ug2/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ug2;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    if (!ok)
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

json load_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  try {
    json j;
    is >> j;
    return j;
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

std::vector<uint32_t> parse_dims(const std::string& s) {
  std::vector<uint32_t> dims;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) dims.push_back(uint32_t(std::stoul(tok)));
  if (dims.empty()) throw ValidationError("--dims needs at least one entry");
  return dims;
}

// ---- run config ----

struct RunConfig {
  uint64_t seed = 0;
  std::string output_dir = "ug2_out";
  uint32_t d_in = 32;
  std::vector<ModalityEncoder> encoders;
  TrainConfig train;
  struct Dataset {
    std::string edge_path, manifest_path;  // file-backed
    std::optional<SynthConfig> synth;      // or generated
    std::string domain_id;
  };
  std::vector<Dataset> datasets;
};

SynthConfig synth_from_json(const json& j) {
  check_keys(j,
             {"num_nodes", "num_communities", "p_in", "p_out", "dims",
              "noise_sigma", "p_missing", "seed", "train_per_class",
              "val_per_class"},
             "datasets[].synth");
  SynthConfig s;
  if (j.contains("num_nodes")) s.num_nodes = j.at("num_nodes").get<uint32_t>();
  if (j.contains("num_communities"))
    s.num_communities = j.at("num_communities").get<uint32_t>();
  if (j.contains("p_in")) s.p_in = j.at("p_in").get<double>();
  if (j.contains("p_out")) s.p_out = j.at("p_out").get<double>();
  if (j.contains("dims")) s.dims = j.at("dims").get<std::vector<uint32_t>>();
  if (j.contains("noise_sigma")) s.noise_sigma = j.at("noise_sigma").get<double>();
  if (j.contains("p_missing")) s.p_missing = j.at("p_missing").get<double>();
  if (j.contains("seed")) s.seed = j.at("seed").get<uint64_t>();
  if (j.contains("train_per_class"))
    s.train_per_class = j.at("train_per_class").get<uint32_t>();
  if (j.contains("val_per_class"))
    s.val_per_class = j.at("val_per_class").get<uint32_t>();
  return s;
}

TrainConfig train_from_json(const json& j, uint64_t default_seed) {
  check_keys(j,
             {"mask_rate", "d_hidden", "lr", "weight_decay", "dropout",
              "epochs", "num_gnn_layers", "ppr_topk", "num_experts", "lambda",
              "gamma", "alpha_ppr", "epsilon_ppr", "spd_anchors",
              "spd_pairs_per_node", "spd_dmax", "steps_per_epoch_per_graph",
              "seed", "aggregator", "expert_hidden", "gating_hidden",
              "spd_head_hidden", "use_adapters", "grad_clip",
              "full_graph_threshold"},
             "train");
  TrainConfig t;
  t.seed = default_seed;
  auto opt = [&](const char* key, auto& dst) {
    using T = std::decay_t<decltype(dst)>;
    if (j.contains(key)) dst = j.at(key).get<T>();
  };
  opt("mask_rate", t.mask_rate);
  opt("d_hidden", t.d_hidden);
  opt("lr", t.lr);
  opt("weight_decay", t.weight_decay);
  opt("dropout", t.dropout);
  opt("epochs", t.epochs);
  opt("num_gnn_layers", t.num_gnn_layers);
  opt("ppr_topk", t.ppr_topk);
  opt("num_experts", t.num_experts);
  opt("lambda", t.lambda);
  opt("gamma", t.gamma);
  opt("alpha_ppr", t.alpha_ppr);
  opt("epsilon_ppr", t.epsilon_ppr);
  opt("spd_anchors", t.spd_anchors);
  opt("spd_pairs_per_node", t.spd_pairs_per_node);
  opt("spd_dmax", t.spd_dmax);
  opt("steps_per_epoch_per_graph", t.steps_per_epoch_per_graph);
  opt("seed", t.seed);
  opt("expert_hidden", t.expert_hidden);
  opt("gating_hidden", t.gating_hidden);
  opt("spd_head_hidden", t.spd_head_hidden);
  opt("use_adapters", t.use_adapters);
  opt("grad_clip", t.grad_clip);
  opt("full_graph_threshold", t.full_graph_threshold);
  if (j.contains("aggregator"))
    t.aggregator = parse_aggregator(j.at("aggregator").get<std::string>());
  return t;
}

RunConfig run_config_from_json(const json& j, const std::string& path) {
  check_keys(j, {"seed", "output_dir", "d_in", "encoders", "train", "datasets"},
             path);
  RunConfig rc;
  if (j.contains("seed")) rc.seed = j.at("seed").get<uint64_t>();
  if (j.contains("output_dir"))
    rc.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("d_in")) rc.d_in = j.at("d_in").get<uint32_t>();
  if (j.contains("encoders")) {
    for (const auto& je : j.at("encoders")) {
      check_keys(je, {"name", "kind", "out_dim", "channels", "seed"},
                 "encoders[]");
      ModalityEncoder e;
      e.name = je.at("name").get<std::string>();
      if (je.contains("kind"))
        e.kind = parse_encoder_kind(je.at("kind").get<std::string>());
      e.out_dim = je.contains("out_dim") ? je.at("out_dim").get<uint32_t>()
                                         : rc.d_in;
      if (je.contains("channels")) e.channels = je.at("channels").get<uint32_t>();
      e.seed = je.contains("seed") ? je.at("seed").get<uint64_t>() : rc.seed;
      rc.encoders.push_back(std::move(e));
    }
  }
  rc.train = j.contains("train") ? train_from_json(j.at("train"), rc.seed)
                                 : TrainConfig{};
  if (!j.contains("train")) rc.train.seed = rc.seed;
  if (!j.contains("datasets") || j.at("datasets").empty())
    throw ConfigError(path + ": datasets must list at least one entry");
  for (const auto& jd : j.at("datasets")) {
    check_keys(jd, {"edges", "manifest", "synth", "domain_id"}, "datasets[]");
    RunConfig::Dataset d;
    if (jd.contains("synth")) {
      d.synth = synth_from_json(jd.at("synth"));
      d.domain_id = jd.contains("domain_id")
                        ? jd.at("domain_id").get<std::string>()
                        : "synth";
    } else {
      if (!jd.contains("edges") || !jd.contains("manifest"))
        throw ConfigError("datasets[]: need either synth or edges+manifest");
      d.edge_path = jd.at("edges").get<std::string>();
      d.manifest_path = jd.at("manifest").get<std::string>();
      if (!fs::exists(d.edge_path))
        throw ConfigError("datasets[].edges: no such file " + d.edge_path);
      if (!fs::exists(d.manifest_path))
        throw ConfigError("datasets[].manifest: no such file " + d.manifest_path);
      if (jd.contains("domain_id"))
        d.domain_id = jd.at("domain_id").get<std::string>();
    }
    rc.datasets.push_back(std::move(d));
  }
  return rc;
}

MultimodalGraph load_dataset(const RunConfig::Dataset& d) {
  MultimodalGraph g;
  if (d.synth) {
    g = synth_mmg(*d.synth);
  } else {
    g = load_graph(d.edge_path, d.manifest_path);
  }
  if (!d.domain_id.empty()) g.domain_id = d.domain_id;
  return g;
}

// Fills in fallback precomputed encoders for modalities without a spec.
std::vector<ModalityEncoder> resolve_encoders(
    const RunConfig& rc, const std::vector<MultimodalGraph>& graphs) {
  std::vector<ModalityEncoder> encs = rc.encoders;
  for (const auto& g : graphs) {
    for (const auto& m : g.modalities) {
      bool found = false;
      for (const auto& e : encs) found = found || e.name == m.name;
      if (!found)
        encs.push_back({.name = m.name, .kind = EncoderKind::precomputed,
                        .out_dim = rc.d_in, .channels = 3, .seed = rc.seed});
    }
  }
  for (const auto& e : encs)
    if (e.out_dim != rc.d_in)
      throw ConfigError("encoder '" + e.name + "' out_dim != d_in");
  return encs;
}

EmbeddingSet read_embeddings(const std::string& path) {
  auto fm = read_mmgf(path);
  EmbeddingSet e;
  e.graph_id = path;
  e.ids.resize(fm.rows);
  for (uint32_t i = 0; i < fm.rows; ++i) e.ids[i] = i;
  std::vector<double> v(fm.data.begin(), fm.data.end());
  e.vectors = tensor({fm.rows, fm.cols}, std::move(v));
  return e;
}

double binomial_se(double acc, size_t n) {
  return n ? std::sqrt(std::max(acc * (1.0 - acc), 0.0) / double(n)) : 0.0;
}

json protocol_result(const std::string& protocol, const std::string& dataset,
                     const std::string& metric, double value, double se,
                     uint64_t seed) {
  return {{"protocol", protocol}, {"dataset", dataset}, {"metric", metric},
          {"value", value},       {"stderr", se},       {"seed", seed}};
}

// ---- subcommands ----

int cmd_synth(const SynthConfig& scfg, const std::string& out_dir,
              const std::string& domain_id) {
  auto g = synth_mmg(scfg);
  if (!domain_id.empty()) g.domain_id = domain_id;
  write_graph(g, out_dir);
  json cov = json::object();
  for (const auto& m : g.modalities) {
    size_t present = 0;
    for (uint8_t b : m.presence) present += b;
    cov[m.name] = double(present) / double(g.graph.num_nodes);
  }
  json out = {{"nodes", g.graph.num_nodes},
              {"edges", g.graph.undirected_edge_count()},
              {"communities", scfg.num_communities},
              {"modal_coverage", cov},
              {"dir", out_dir}};
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_pretrain(const RunConfig& rc) {
  std::vector<MultimodalGraph> graphs;
  for (const auto& d : rc.datasets) graphs.push_back(load_dataset(d));
  auto encs = resolve_encoders(rc, graphs);

  fs::create_directories(rc.output_dir);
  std::ofstream metrics(fs::path(rc.output_dir) / "metrics.jsonl");
  if (!metrics) throw IoError("cannot write metrics.jsonl in " + rc.output_dir);

  PretrainOptions opts;
  opts.checkpoint_dir = rc.output_dir;
  int32_t last_epoch = 0;
  opts.on_step = [&](const MetricsRecord& m) {
    metrics << metrics_to_json(m) << "\n";
    if (m.epoch != last_epoch) {
      metrics.flush();  // flushed per epoch
      last_epoch = m.epoch;
    }
    if (m.step % 100 == 0)
      std::cerr << "[ug2] step " << m.step << " epoch " << m.epoch << " ("
                << m.domain_id << ") loss " << m.loss_total << "\n";
  };
  auto result = pretrain(graphs, encs, rc.train, opts);
  metrics.flush();

  json out = {{"checkpoint", rc.output_dir + "/ckpt_final"},
              {"metrics", rc.output_dir + "/metrics.jsonl"},
              {"steps", result.metrics.size()},
              {"final_loss", result.metrics.back().loss_total},
              {"domains", json::array()}};
  for (const auto& [dom, dec] : result.params.decoders)
    out["domains"].push_back(dom);
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_embed(const std::string& ckpt_path, const std::string& edges,
              const std::string& manifest, const std::string& out_path,
              uint64_t seed, uint32_t threshold) {
  auto ckpt = load_checkpoint(ckpt_path);
  auto g = load_graph(edges, manifest);
  TrainConfig cfg;
  cfg.seed = seed;
  if (threshold) cfg.full_graph_threshold = threshold;
  auto emb = infer_embeddings(g, ckpt.params, ckpt.encoders, cfg);

  FeatureMatrix fm;
  fm.rows = uint32_t(emb.vectors->rows());
  fm.cols = uint32_t(emb.vectors->cols());
  fm.data.assign(emb.vectors->data.begin(), emb.vectors->data.end());
  write_mmgf(out_path, fm);
  json meta = {{"domain_id", g.domain_id},
               {"nodes", fm.rows},
               {"dim", fm.cols},
               {"checkpoint", ckpt_path},
               {"seed", seed},
               {"unseen_domain", !ckpt.params.has_domain(g.domain_id)}};
  std::ofstream meta_os(out_path + ".json");
  meta_os << meta.dump(2) << "\n";
  std::cout << meta.dump() << "\n";
  return 0;
}

int cmd_probe(const std::string& emb_path, const std::string& edges,
              const std::string& manifest, const ProbeOptions& opts) {
  auto emb = read_embeddings(emb_path);
  auto g = load_graph(edges, manifest);
  if (!g.has_labels()) throw ValidationError("probe: dataset has no labels");
  if (g.splits.empty()) throw ValidationError("probe: dataset has no splits");
  auto res = linear_probe(emb, g.labels, g.splits, opts);
  auto out = protocol_result("linear_probe", g.domain_id, "accuracy",
                             res.accuracy,
                             binomial_se(res.accuracy, g.splits.test.size()),
                             opts.seed);
  out["best_epoch"] = res.best_epoch;
  out["per_class"] = res.per_class;
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_fewshot(const std::string& emb_path, const std::string& edges,
                const std::string& manifest, const FewShotOptions& opts) {
  auto emb = read_embeddings(emb_path);
  auto g = load_graph(edges, manifest);
  if (!g.has_labels()) throw ValidationError("fewshot: dataset has no labels");
  const double acc = few_shot(emb, g.labels, g.splits, opts);
  auto out = protocol_result(
      "few_shot", g.domain_id, "accuracy", acc,
      binomial_se(acc, size_t(opts.num_tasks) * opts.n_way * opts.queries_per_class),
      opts.seed);
  out["n_way"] = opts.n_way;
  out["k_shot"] = opts.k_shot;
  out["num_tasks"] = opts.num_tasks;
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_linkpred(const std::string& emb_path, const std::string& test_edges_path,
                 const std::string& known_edges_path,
                 const LinkPredOptions& opts) {
  auto emb = read_embeddings(emb_path);
  auto [tn, tedges] = read_edge_list(test_edges_path);
  if (tn > emb.ids.size())
    throw ValidationError("linkpred: test edges reference more nodes than embedded");
  CsrGraph known;
  const CsrGraph* known_ptr = nullptr;
  if (!known_edges_path.empty()) {
    auto [kn, kedges] = read_edge_list(known_edges_path);
    known = CsrGraph::from_edges(kn, kedges);
    known_ptr = &known;
  }
  const double mrr = link_mrr(emb, tedges, known_ptr, opts);
  auto out = protocol_result("link_prediction", test_edges_path, "mrr", mrr,
                             binomial_se(mrr, tedges.size()), opts.seed);
  out["num_negatives"] = opts.num_negatives;
  out["num_test_edges"] = tedges.size();
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_gradcheck(uint64_t seed, const std::string& aggregator, bool inject_bug) {
  std::vector<AggregatorKind> kinds;
  if (aggregator == "both") {
    kinds = {AggregatorKind::mean, AggregatorKind::gat};
  } else {
    kinds = {parse_aggregator(aggregator)};
  }
  json out;
  out["seed"] = seed;
  out["tolerance"] = 1e-4;
  out["reports"] = json::array();
  bool passed = true;
  double worst = 0.0;
  for (auto kind : kinds) {
    auto rep = gradcheck_run(seed, kind, inject_bug);
    passed = passed && rep.passed;
    worst = std::max(worst, rep.max_rel_err);
    json groups = json::array();
    for (const auto& g : rep.groups)
      groups.push_back({{"group", g.name},
                        {"max_rel_err", g.max_rel_err},
                        {"checked", g.checked}});
    out["reports"].push_back({{"aggregator", rep.aggregator},
                              {"max_rel_err", rep.max_rel_err},
                              {"passed", rep.passed},
                              {"groups", groups}});
  }
  out["max_rel_err"] = worst;
  out["passed"] = passed;
  std::cout << out.dump() << "\n";
  return passed ? 0 : 1;
}

int cmd_ppr(const std::string& edges, uint32_t seed_node, double alpha,
            double epsilon, uint32_t topk) {
  auto [n, edge_list] = read_edge_list(edges);
  auto g = CsrGraph::from_edges(n, edge_list);
  auto p = ppr_push(g, seed_node, alpha, epsilon);
  std::vector<std::pair<double, uint32_t>> ranked;
  for (const auto& [v, s] : p.scores) ranked.emplace_back(s, v);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  if (topk && ranked.size() > topk) ranked.resize(topk);
  for (const auto& [s, v] : ranked) {
    json row = {{"node", v}, {"score", s}};
    std::cout << row.dump() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"self-supervised multimodal graph embeddings"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a planted-community multimodal graph");
  SynthConfig scfg;
  std::string synth_out = "synth_graph", synth_domain, synth_dims = "40,28";
  synth->add_option("--nodes", scfg.num_nodes);
  synth->add_option("--communities", scfg.num_communities);
  synth->add_option("--p-in", scfg.p_in);
  synth->add_option("--p-out", scfg.p_out);
  synth->add_option("--dims", synth_dims, "per-modality raw dims, comma separated");
  synth->add_option("--noise-sigma", scfg.noise_sigma);
  synth->add_option("--p-missing", scfg.p_missing);
  synth->add_option("--seed", scfg.seed);
  synth->add_option("--train-per-class", scfg.train_per_class);
  synth->add_option("--val-per-class", scfg.val_per_class);
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--domain-id", synth_domain);

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "run cross-domain pre-training from a run config");
  std::string config_path;
  uint64_t seed_override = 0;
  bool seed_overridden = false;
  std::string output_override;
  uint32_t epochs_override = 0;
  pre->add_option("--config", config_path)->required();
  pre->add_option("--seed", seed_override)->each([&](const std::string&) {
    seed_overridden = true;
  });
  pre->add_option("--output", output_override);
  pre->add_option("--epochs", epochs_override);

  // embed
  auto* emb = app.add_subcommand("embed", "write inference embeddings for a graph");
  std::string emb_ckpt, emb_edges, emb_manifest, emb_out = "embeddings.mmgf";
  uint64_t emb_seed = 0;
  uint32_t emb_threshold = 0;
  emb->add_option("--checkpoint", emb_ckpt)->required();
  emb->add_option("--edges", emb_edges)->required();
  emb->add_option("--manifest", emb_manifest)->required();
  emb->add_option("--out", emb_out);
  emb->add_option("--seed", emb_seed);
  emb->add_option("--full-graph-threshold", emb_threshold);

  // probe
  auto* probe = app.add_subcommand("probe", "linear probe over frozen embeddings");
  std::string probe_emb, probe_edges, probe_manifest;
  ProbeOptions popts;
  probe->add_option("--embeddings", probe_emb)->required();
  probe->add_option("--edges", probe_edges)->required();
  probe->add_option("--manifest", probe_manifest)->required();
  probe->add_option("--lr", popts.lr);
  probe->add_option("--max-epochs", popts.max_epochs);
  probe->add_option("--patience", popts.patience);
  probe->add_option("--seed", popts.seed);

  // fewshot
  auto* few = app.add_subcommand("fewshot", "N-way K-shot prototype evaluation");
  std::string few_emb, few_edges, few_manifest;
  FewShotOptions fopts;
  few->add_option("--embeddings", few_emb)->required();
  few->add_option("--edges", few_edges)->required();
  few->add_option("--manifest", few_manifest)->required();
  few->add_option("--n-way", fopts.n_way);
  few->add_option("--k-shot", fopts.k_shot);
  few->add_option("--queries-per-class", fopts.queries_per_class);
  few->add_option("--num-tasks", fopts.num_tasks);
  few->add_option("--seed", fopts.seed);

  // linkpred
  auto* link = app.add_subcommand("linkpred", "link prediction MRR over embeddings");
  std::string link_emb, link_test, link_known;
  LinkPredOptions lopts;
  link->add_option("--embeddings", link_emb)->required();
  link->add_option("--test-edges", link_test)->required();
  link->add_option("--known-edges", link_known,
                   "edge list of known positives to exclude from negatives");
  link->add_option("--num-negatives", lopts.num_negatives);
  link->add_option("--seed", lopts.seed);

  // gradcheck
  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every parameter gradient");
  uint64_t grad_seed = 0;
  std::string grad_agg = "both";
  bool inject_bug = false;
  grad->add_option("--seed", grad_seed);
  grad->add_option("--aggregator", grad_agg, "mean|gat|both");
  grad->add_flag("--inject-grad-bug", inject_bug,
                 "test fixture: corrupt one gradient to prove detection")
      ->group("");  // hidden

  // ppr
  auto* pprc = app.add_subcommand("ppr", "personalized pagerank scores from a seed node");
  std::string ppr_edges;
  uint32_t ppr_seed_node = 0, ppr_topk = 0;
  double ppr_alpha = 0.15, ppr_eps = 1e-4;
  pprc->add_option("--edges", ppr_edges)->required();
  pprc->add_option("--seed-node", ppr_seed_node)->required();
  pprc->add_option("--alpha", ppr_alpha);
  pprc->add_option("--epsilon", ppr_eps);
  pprc->add_option("--topk", ppr_topk, "0 = all nonzero scores");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) {
      scfg.dims = parse_dims(synth_dims);
      return cmd_synth(scfg, synth_out, synth_domain);
    }
    if (pre->parsed()) {
      auto rc = run_config_from_json(load_json(config_path), config_path);
      if (seed_overridden) {
        rc.seed = seed_override;
        rc.train.seed = seed_override;
      }
      if (!output_override.empty()) rc.output_dir = output_override;
      if (epochs_override) rc.train.epochs = epochs_override;
      return cmd_pretrain(rc);
    }
    if (emb->parsed())
      return cmd_embed(emb_ckpt, emb_edges, emb_manifest, emb_out, emb_seed,
                       emb_threshold);
    if (probe->parsed())
      return cmd_probe(probe_emb, probe_edges, probe_manifest, popts);
    if (few->parsed()) return cmd_fewshot(few_emb, few_edges, few_manifest, fopts);
    if (link->parsed()) return cmd_linkpred(link_emb, link_test, link_known, lopts);
    if (grad->parsed()) return cmd_gradcheck(grad_seed, grad_agg, inject_bug);
    if (pprc->parsed())
      return cmd_ppr(ppr_edges, ppr_seed_node, ppr_alpha, ppr_eps, ppr_topk);
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
