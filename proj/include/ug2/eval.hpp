#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ug2/graph.hpp"
#include "ug2/model.hpp"

namespace ug2 {

struct ProbeResult {
  double accuracy = 0.0;  // test accuracy at the best-validation epoch
  int32_t best_epoch = 0;
  std::vector<double> per_class;
  uint64_t seed = 0;
};

struct ProbeOptions {
  double lr = 0.01;
  int32_t max_epochs = 5000;
  int32_t patience = 100;  // epochs without val improvement before stopping
  uint64_t seed = 0;
};

/// Full-batch softmax regression (logits = H W) on frozen embeddings,
/// Adam, early stopping on validation accuracy.
ProbeResult linear_probe(const EmbeddingSet& emb, const std::vector<int32_t>& labels,
                         const Splits& splits, const ProbeOptions& opts = {});

struct FewShotOptions {
  uint32_t n_way = 5;
  uint32_t k_shot = 5;
  uint32_t queries_per_class = 1;  // drawn from the test split per episode
  uint32_t num_tasks = 500;
  uint64_t seed = 0;
};

/// Nearest class-mean episodes: prototype = mean of K support embeddings
/// (train split); queries go to the class with highest cosine similarity,
/// ties to the lowest class index. Returns mean accuracy over episodes.
double few_shot(const EmbeddingSet& emb, const std::vector<int32_t>& labels,
                const Splits& splits, const FewShotOptions& opts = {});

struct LinkPredOptions {
  uint32_t num_negatives = 100;
  uint64_t seed = 0;
};

/// Cosine-scored ranking of each test edge's true tail against uniformly
/// corrupted tails (known positives excluded); ties rank the true tail
/// last. Returns mean reciprocal rank.
double link_mrr(const EmbeddingSet& emb,
                const std::vector<std::pair<uint32_t, uint32_t>>& test_edges,
                const CsrGraph* known_graph, const LinkPredOptions& opts = {});

}  // namespace ug2
