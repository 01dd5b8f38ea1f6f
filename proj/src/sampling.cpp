#include "ug2/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "ug2/rng.hpp"

namespace ug2 {

PprVector ppr_push(const CsrGraph& g, uint32_t seed, double alpha,
                   double epsilon) {
  if (alpha <= 0.0 || alpha >= 1.0)
    throw ContractError("ppr_push: alpha must be in (0,1)");
  if (epsilon <= 0.0) throw ContractError("ppr_push: epsilon must be > 0");
  if (seed >= g.num_nodes)
    throw ContractError("ppr_push: seed " + std::to_string(seed) + " out of range");

  PprVector p;
  p.seed = seed;
  p.alpha = alpha;
  p.epsilon = epsilon;
  p.residuals[seed] = 1.0;

  std::deque<uint32_t> queue = {seed};
  std::vector<uint8_t> queued(g.num_nodes, 0);
  queued[seed] = 1;

  while (!queue.empty()) {
    const uint32_t u = queue.front();
    queue.pop_front();
    queued[u] = 0;
    const double ru = p.residuals[u];
    const uint32_t deg = g.degree(u);
    if (deg == 0) {
      // Isolated node: the walk never leaves, so the whole geometric series
      // of teleport mass lands here.
      p.scores[u] += ru;
      p.residuals.erase(u);
      ++p.push_count;
      continue;
    }
    if (ru < epsilon * deg) continue;
    p.scores[u] += alpha * ru;
    p.residuals.erase(u);
    const double share = (1.0 - alpha) * ru / deg;
    for (uint32_t v : g.neighbors(u)) {
      double& rv = p.residuals[v];
      rv += share;
      if (!queued[v] && rv >= epsilon * g.degree(v)) {
        queue.push_back(v);
        queued[v] = 1;
      }
    }
    ++p.push_count;
  }
  // drop exhausted entries so the stored residuals are exactly the remainder
  std::erase_if(p.residuals, [](const auto& kv) { return kv.second == 0.0; });
  return p;
}

InducedSubgraph topk_subgraph(const CsrGraph& g, const PprVector& ppr,
                              uint32_t k) {
  if (k == 0) throw ContractError("topk_subgraph: k must be >= 1");
  std::vector<std::pair<double, uint32_t>> ranked;
  ranked.reserve(ppr.scores.size());
  for (const auto& [v, s] : ppr.scores)
    if (v != ppr.seed && s > 0.0) ranked.emplace_back(s, v);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });

  InducedSubgraph out;
  out.global_ids.push_back(ppr.seed);
  for (size_t i = 0; i + 1 < k && i < ranked.size(); ++i)
    out.global_ids.push_back(ranked[i].second);
  std::sort(out.global_ids.begin(), out.global_ids.end());

  std::unordered_map<uint32_t, uint32_t> local_of;
  local_of.reserve(out.global_ids.size());
  for (uint32_t i = 0; i < out.global_ids.size(); ++i)
    local_of[out.global_ids[i]] = i;
  out.seed_local = local_of.at(ppr.seed);

  std::vector<std::pair<uint32_t, uint32_t>> edges;
  for (uint32_t li = 0; li < out.global_ids.size(); ++li) {
    for (uint32_t nb : g.neighbors(out.global_ids[li])) {
      auto it = local_of.find(nb);
      if (it != local_of.end() && li < it->second)
        edges.emplace_back(li, it->second);
    }
  }
  out.local = CsrGraph::from_edges(uint32_t(out.global_ids.size()), edges);
  return out;
}

SpdTable bfs_from_anchors(const CsrGraph& g, const std::vector<uint32_t>& anchors) {
  SpdTable t;
  t.anchors = anchors;
  t.num_nodes = g.num_nodes;
  t.dist.assign(anchors.size() * size_t(g.num_nodes), -1);
  std::deque<uint32_t> queue;
  for (size_t a = 0; a < anchors.size(); ++a) {
    int32_t* dist = &t.dist[a * size_t(g.num_nodes)];
    dist[anchors[a]] = 0;
    queue.clear();
    queue.push_back(anchors[a]);
    while (!queue.empty()) {
      const uint32_t u = queue.front();
      queue.pop_front();
      for (uint32_t v : g.neighbors(u)) {
        if (dist[v] < 0) {
          dist[v] = dist[u] + 1;
          queue.push_back(v);
        }
      }
    }
  }
  return t;
}

std::vector<SpdPair> spd_targets(const CsrGraph& sub, uint32_t num_anchors,
                                 uint32_t pairs_per_node, uint32_t d_max,
                                 uint64_t seed) {
  if (num_anchors == 0) throw ContractError("spd_targets: num_anchors must be >= 1");
  Rng rng(seed);
  const uint32_t n = sub.num_nodes;
  const uint32_t na = std::min(num_anchors, n);
  std::vector<uint32_t> anchors = rng.sample_without_replacement(n, na);
  auto table = bfs_from_anchors(sub, anchors);

  std::vector<SpdPair> pairs;
  for (size_t a = 0; a < anchors.size(); ++a) {
    for (uint32_t v = 0; v < n; ++v) {
      const int32_t d = table.at(a, v);
      if (d < 0 || uint32_t(d) > d_max) continue;  // unreachable pairs excluded
      pairs.push_back({anchors[a], v, float(d)});
    }
  }
  const size_t budget = size_t(pairs_per_node) * n;
  if (pairs.size() > budget) {
    rng.shuffle(pairs);
    pairs.resize(budget);
  }
  return pairs;
}

SubgraphBatch make_batch(const MultimodalGraph& g, const FeatureMatrix& fused,
                         uint32_t seed_node, const TrainConfig& cfg,
                         uint64_t rng_seed) {
  if (fused.rows != g.graph.num_nodes)
    throw ContractError("make_batch: fused rows != num_nodes");

  auto ppr = ppr_push(g.graph, seed_node, cfg.alpha_ppr, cfg.epsilon_ppr);
  auto sub = topk_subgraph(g.graph, ppr, cfg.ppr_topk);

  SubgraphBatch batch;
  batch.domain_id = g.domain_id;
  batch.local = std::move(sub.local);
  batch.global_ids = std::move(sub.global_ids);
  batch.seed_local = sub.seed_local;

  const uint32_t nsub = uint32_t(batch.global_ids.size());
  const uint32_t d = fused.cols;
  std::vector<double> feat(size_t(nsub) * d);
  for (uint32_t i = 0; i < nsub; ++i)
    for (uint32_t j = 0; j < d; ++j)
      feat[size_t(i) * d + j] = fused.at(batch.global_ids[i], j);
  batch.fused = tensor({nsub, d}, std::move(feat));

  Rng rng(mix_seed(rng_seed, 0xa1));
  const uint32_t num_masked = uint32_t(std::lround(cfg.mask_rate * nsub));
  batch.mask_set = rng.sample_without_replacement(nsub, num_masked);
  batch.spd_pairs = spd_targets(batch.local, cfg.spd_anchors,
                                cfg.spd_pairs_per_node, cfg.spd_dmax,
                                mix_seed(rng_seed, 0xb2));
  return batch;
}

}  // namespace ug2
