#include "ug2/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <set>
#include <unordered_set>

#include "ug2/rng.hpp"
#include "ug2/tensor.hpp"

namespace ug2 {

namespace {

TensorPtr gather_embeddings(const EmbeddingSet& emb,
                            const std::vector<uint32_t>& ids) {
  return gather_rows(emb.vectors, ids);
}

std::vector<int32_t> gather_labels(const std::vector<int32_t>& labels,
                                   const std::vector<uint32_t>& ids) {
  std::vector<int32_t> out;
  out.reserve(ids.size());
  for (uint32_t id : ids) out.push_back(labels.at(id));
  return out;
}

double accuracy_of(const TensorPtr& logits, const std::vector<int32_t>& y) {
  size_t hit = 0;
  const size_t c = logits->cols();
  for (size_t i = 0; i < y.size(); ++i) {
    size_t best = 0;
    for (size_t k = 1; k < c; ++k)
      if (logits->data[i * c + k] > logits->data[i * c + best]) best = k;
    if (int32_t(best) == y[i]) ++hit;
  }
  return y.empty() ? 0.0 : double(hit) / double(y.size());
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::max(std::sqrt(na) * std::sqrt(nb), 1e-12);
}

}  // namespace

ProbeResult linear_probe(const EmbeddingSet& emb,
                         const std::vector<int32_t>& labels, const Splits& splits,
                         const ProbeOptions& opts) {
  if (labels.size() != emb.ids.size())
    throw ContractError("linear_probe: label count mismatch");
  if (splits.train.empty() || splits.test.empty())
    throw ContractError("linear_probe: empty train or test split");

  const auto y_train = gather_labels(labels, splits.train);
  const auto y_val = gather_labels(labels, splits.val);
  const auto y_test = gather_labels(labels, splits.test);
  const int32_t num_classes =
      *std::max_element(labels.begin(), labels.end()) + 1;
  {
    std::set<int32_t> train_classes(y_train.begin(), y_train.end());
    if (train_classes.size() < 2)
      throw ContractError("linear_probe: train split needs >= 2 classes");
    for (int32_t y : y_test)
      if (!train_classes.count(y)) {
        std::cerr << "[ug2] warning: test class " << y
                  << " absent from train split\n";
        break;
      }
  }

  auto x_train = gather_embeddings(emb, splits.train);
  auto x_val = splits.val.empty() ? nullptr : gather_embeddings(emb, splits.val);
  auto x_test = gather_embeddings(emb, splits.test);
  const size_t d = emb.vectors->cols();

  auto w = zeros({d, size_t(num_classes)}, true);
  AdamWConfig ocfg;
  ocfg.lr = opts.lr;
  ocfg.weight_decay = 0.0;  // plain Adam
  AdamWState opt({{"probe.w", w}}, ocfg);

  ProbeResult result;
  result.seed = opts.seed;
  double best_val = -1.0;
  int32_t since_best = 0;
  std::vector<double> best_w;

  for (int32_t epoch = 1; epoch <= opts.max_epochs; ++epoch) {
    {
      Tape tape;
      auto loss = cross_entropy(matmul(x_train, w), y_train);
      tape.backward(loss);
    }
    opt.step();

    double val_acc;
    {
      NoGrad ng;
      val_acc = x_val ? accuracy_of(matmul(x_val, w), y_val)
                      : accuracy_of(matmul(x_train, w), y_train);
    }
    if (val_acc > best_val) {
      best_val = val_acc;
      result.best_epoch = epoch;
      best_w = w->data;
      since_best = 0;
    } else if (++since_best >= opts.patience) {
      break;
    }
  }

  w->data = best_w;
  NoGrad ng;
  auto test_logits = matmul(x_test, w);
  result.accuracy = accuracy_of(test_logits, y_test);
  result.per_class.assign(size_t(num_classes), 0.0);
  std::vector<size_t> per_class_n(size_t(num_classes), 0);
  for (size_t i = 0; i < y_test.size(); ++i) {
    size_t best = 0;
    for (size_t k = 1; k < size_t(num_classes); ++k)
      if (test_logits->data[i * num_classes + k] >
          test_logits->data[i * num_classes + best])
        best = k;
    per_class_n[size_t(y_test[i])]++;
    if (int32_t(best) == y_test[i]) result.per_class[size_t(y_test[i])] += 1.0;
  }
  for (size_t k = 0; k < result.per_class.size(); ++k)
    if (per_class_n[k]) result.per_class[k] /= double(per_class_n[k]);
  return result;
}

double few_shot(const EmbeddingSet& emb, const std::vector<int32_t>& labels,
                const Splits& splits, const FewShotOptions& opts) {
  if (labels.size() != emb.ids.size())
    throw ContractError("few_shot: label count mismatch");
  if (opts.n_way < 2) throw ContractError("few_shot: n_way must be >= 2");
  if (opts.k_shot < 1 || opts.queries_per_class < 1 || opts.num_tasks < 1)
    throw ContractError("few_shot: counts must be positive");

  const int32_t num_classes =
      *std::max_element(labels.begin(), labels.end()) + 1;
  if (uint32_t(num_classes) < opts.n_way)
    throw ValidationError("few_shot: " + std::to_string(opts.n_way) +
                          "-way task over " + std::to_string(num_classes) +
                          " classes");
  const size_t nc = size_t(num_classes);
  std::vector<std::vector<uint32_t>> train_by_class(nc);
  std::vector<std::vector<uint32_t>> test_by_class(nc);
  for (uint32_t id : splits.train)
    train_by_class[size_t(labels.at(id))].push_back(id);
  for (uint32_t id : splits.test)
    test_by_class[size_t(labels.at(id))].push_back(id);

  Rng rng(opts.seed);
  const size_t d = emb.vectors->cols();
  double episode_acc_sum = 0.0;

  for (uint32_t task = 0; task < opts.num_tasks; ++task) {
    auto ways = rng.sample_without_replacement(uint32_t(num_classes), opts.n_way);
    size_t hit = 0, total = 0;
    std::vector<std::vector<double>> prototypes(ways.size(),
                                                std::vector<double>(d, 0.0));
    for (size_t wy = 0; wy < ways.size(); ++wy) {
      const auto& pool = train_by_class[ways[wy]];
      if (pool.size() < opts.k_shot)
        throw ValidationError("few_shot: class " + std::to_string(ways[wy]) +
                              " has " + std::to_string(pool.size()) +
                              " train nodes, needs " +
                              std::to_string(opts.k_shot));
      auto pick = rng.sample_without_replacement(uint32_t(pool.size()), opts.k_shot);
      for (uint32_t pi : pick) {
        auto row = emb.row(pool[pi]);
        for (size_t j = 0; j < d; ++j) prototypes[wy][j] += row[j];
      }
      for (size_t j = 0; j < d; ++j) prototypes[wy][j] /= double(opts.k_shot);
    }
    for (size_t wy = 0; wy < ways.size(); ++wy) {
      const auto& pool = test_by_class[ways[wy]];
      if (pool.empty())
        throw ValidationError("few_shot: class " + std::to_string(ways[wy]) +
                              " has no test nodes");
      for (uint32_t q = 0; q < opts.queries_per_class; ++q) {
        const uint32_t qid = pool[rng.index(pool.size())];
        auto row = emb.row(qid);
        size_t best = 0;
        double best_sim = -2.0;
        for (size_t cand = 0; cand < ways.size(); ++cand) {
          const double sim = cosine(row, prototypes[cand]);
          if (sim > best_sim) {  // strict: ties keep the lowest class index
            best_sim = sim;
            best = cand;
          }
        }
        ++total;
        if (best == wy) ++hit;
      }
    }
    episode_acc_sum += double(hit) / double(total);
  }
  return episode_acc_sum / double(opts.num_tasks);
}

double link_mrr(const EmbeddingSet& emb,
                const std::vector<std::pair<uint32_t, uint32_t>>& test_edges,
                const CsrGraph* known_graph, const LinkPredOptions& opts) {
  if (test_edges.empty()) throw ContractError("link_mrr: no test edges");
  const uint32_t n = uint32_t(emb.ids.size());

  // positives: the provided graph's edges plus the test edges themselves
  std::unordered_set<uint64_t> positives;
  auto key = [](uint32_t a, uint32_t b) {
    return (uint64_t(a) << 32) | uint64_t(b);
  };
  if (known_graph) {
    for (uint32_t u = 0; u < known_graph->num_nodes; ++u)
      for (uint32_t v : known_graph->neighbors(u)) positives.insert(key(u, v));
  }
  for (auto [u, v] : test_edges) {
    positives.insert(key(u, v));
    positives.insert(key(v, u));
  }

  Rng rng(opts.seed);
  double rr_sum = 0.0;
  for (auto [u, v] : test_edges) {
    if (u >= n || v >= n)
      throw ContractError("link_mrr: edge references unknown node");
    const double true_score = cosine(emb.row(u), emb.row(v));
    uint32_t better = 0, equal = 0, drawn = 0;
    std::unordered_set<uint32_t> used = {u, v};
    uint32_t attempts = 0;
    const uint32_t max_attempts = opts.num_negatives * 50 + 1000;
    while (drawn < opts.num_negatives && attempts < max_attempts) {
      ++attempts;
      const uint32_t cand = uint32_t(rng.index(n));
      if (used.count(cand) || positives.count(key(u, cand))) continue;
      used.insert(cand);
      ++drawn;
      const double s = cosine(emb.row(u), emb.row(cand));
      if (s > true_score)
        ++better;
      else if (s == true_score)
        ++equal;
    }
    // pessimistic ties: the true tail ranks below every equal-scored negative
    rr_sum += 1.0 / double(1 + better + equal);
  }
  return rr_sum / double(test_edges.size());
}

}  // namespace ug2
