#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ug2/graph.hpp"
#include "ug2/rng.hpp"

using namespace ug2;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  auto p = fs::temp_directory_path() / ("ug2_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

double row_cosine(const FeatureMatrix& fm, uint32_t a, uint32_t b) {
  double dot = 0, na = 0, nb = 0;
  for (uint32_t k = 0; k < fm.cols; ++k) {
    dot += double(fm.at(a, k)) * fm.at(b, k);
    na += double(fm.at(a, k)) * fm.at(a, k);
    nb += double(fm.at(b, k)) * fm.at(b, k);
  }
  return dot / std::max(std::sqrt(na) * std::sqrt(nb), 1e-12);
}

}  // namespace

TEST_CASE("edge list load builds expected degrees") {
  auto dir = temp_dir("edges");
  {
    std::ofstream os(dir / "e.txt");
    os << "#nodes=3\n0\t1\n1\t2\n";
  }
  auto [n, edges] = read_edge_list((dir / "e.txt").string());
  auto g = CsrGraph::from_edges(n, edges);
  CHECK(g.degree(0) == 1);
  CHECK(g.degree(1) == 2);
  CHECK(g.degree(2) == 1);
}

TEST_CASE("duplicate and reversed edge lines collapse to one edge") {
  auto g = CsrGraph::from_edges(3, {{0, 1}, {1, 0}, {0, 1}, {0, 1}});
  CHECK(g.undirected_edge_count() == 1);
  CHECK(g.degree(0) == 1);
}

TEST_CASE("self loops are stripped") {
  auto g = CsrGraph::from_edges(2, {{0, 0}, {0, 1}});
  CHECK(g.undirected_edge_count() == 1);
  g.validate();
}

TEST_CASE("out-of-range node id reports the line number") {
  auto dir = temp_dir("badedge");
  {
    std::ofstream os(dir / "e.txt");
    os << "#nodes=2\n0\t1\n0\t5\n";
  }
  CHECK_THROWS_WITH_AS(read_edge_list((dir / "e.txt").string()),
                       doctest::Contains(":3:"), FormatError);
}

TEST_CASE("degree and neighbors respect bounds") {
  auto g = CsrGraph::from_edges(3, {{0, 1}});
  CHECK_THROWS_AS(g.degree(3), ContractError);
  CHECK(g.neighbors(2).empty());  // isolated node
}

TEST_CASE("handshake lemma on a generated graph") {
  SynthConfig cfg;
  cfg.num_nodes = 200;
  cfg.seed = 5;
  auto g = synth_mmg(cfg);
  uint64_t total = 0;
  for (uint32_t v = 0; v < g.graph.num_nodes; ++v) total += g.graph.degree(v);
  CHECK(total == 2 * g.graph.undirected_edge_count());
}

TEST_CASE("mmgf round trip is byte exact") {
  auto dir = temp_dir("mmgf");
  FeatureMatrix fm;
  fm.rows = 3;
  fm.cols = 2;
  fm.data = {1.5f, -2.0f, 0.25f, 3.0f, 0.0f, -1.0f};
  write_mmgf((dir / "f.mmgf").string(), fm);
  auto back = read_mmgf((dir / "f.mmgf").string());
  CHECK(back.rows == 3);
  CHECK(back.cols == 2);
  CHECK(back.data == fm.data);
}

TEST_CASE("missing feature file raises IoError") {
  CHECK_THROWS_AS(read_mmgf("/nonexistent/x.mmgf"), IoError);
}

TEST_CASE("graph write/load round trip reproduces the edge set and metadata") {
  SynthConfig cfg;
  cfg.num_nodes = 120;
  cfg.num_communities = 3;
  cfg.p_in = 0.08;
  cfg.p_out = 0.01;
  cfg.dims = {9, 5};
  cfg.p_missing = 0.2;
  cfg.seed = 11;
  auto g = synth_mmg(cfg);
  auto dir = temp_dir("roundtrip");
  auto [edge_path, manifest_path] = write_graph(g, dir.string());
  auto back = load_graph(edge_path, manifest_path);

  CHECK(back.graph.edge_list() == g.graph.edge_list());
  CHECK(back.labels == g.labels);
  CHECK(back.splits.train == g.splits.train);
  CHECK(back.splits.test == g.splits.test);
  REQUIRE(back.modalities.size() == g.modalities.size());
  for (size_t m = 0; m < g.modalities.size(); ++m) {
    CHECK(back.modalities[m].presence == g.modalities[m].presence);
    const auto& a = std::get<FeatureMatrix>(back.modalities[m].raw);
    const auto& b = std::get<FeatureMatrix>(g.modalities[m].raw);
    CHECK(a.data == b.data);
  }
}

TEST_CASE("manifest with all-present modalities gives full coverage") {
  SynthConfig cfg;
  cfg.num_nodes = 50;
  cfg.dims = {4, 4};
  cfg.p_missing = 0.0;
  cfg.seed = 2;
  auto g = synth_mmg(cfg);
  for (const auto& m : g.modalities)
    for (uint8_t b : m.presence) CHECK(b == 1);
}

TEST_CASE("symmetry invariant holds on random graphs") {
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    SynthConfig cfg;
    cfg.num_nodes = 150;
    cfg.seed = seed;
    auto g = synth_mmg(cfg);
    g.graph.validate();  // includes symmetry + no-self-loop checks
  }
}

TEST_CASE("synthetic generator is deterministic") {
  SynthConfig cfg;
  cfg.num_nodes = 100;
  cfg.p_missing = 0.3;
  cfg.seed = 99;
  auto a = synth_mmg(cfg);
  auto b = synth_mmg(cfg);
  CHECK(a.graph.targets == b.graph.targets);
  CHECK(std::get<FeatureMatrix>(a.modalities[0].raw).data ==
        std::get<FeatureMatrix>(b.modalities[0].raw).data);
  CHECK(a.splits.train == b.splits.train);
}

TEST_CASE("p_out zero yields at least C connected components") {
  SynthConfig cfg;
  cfg.num_nodes = 90;
  cfg.num_communities = 3;
  cfg.p_in = 0.3;
  cfg.p_out = 0.0;
  cfg.seed = 3;
  auto g = synth_mmg(cfg);
  // count components by BFS
  std::vector<int> comp(g.graph.num_nodes, -1);
  int ncomp = 0;
  for (uint32_t s = 0; s < g.graph.num_nodes; ++s) {
    if (comp[s] >= 0) continue;
    std::vector<uint32_t> stack = {s};
    comp[s] = ncomp;
    while (!stack.empty()) {
      uint32_t u = stack.back();
      stack.pop_back();
      for (uint32_t v : g.graph.neighbors(u))
        if (comp[v] < 0) {
          comp[v] = ncomp;
          stack.push_back(v);
        }
    }
    ++ncomp;
  }
  CHECK(ncomp >= 3);
  // no component mixes communities
  for (uint32_t u = 0; u < g.graph.num_nodes; ++u)
    for (uint32_t v : g.graph.neighbors(u)) CHECK(g.labels[u] == g.labels[v]);
}

TEST_CASE("sigma zero with no missing modality duplicates community rows") {
  SynthConfig cfg;
  cfg.num_nodes = 30;
  cfg.num_communities = 2;
  cfg.p_in = 0.5;
  cfg.p_out = 0.1;
  cfg.dims = {6};
  cfg.noise_sigma = 0.0;
  cfg.seed = 8;
  auto g = synth_mmg(cfg);
  const auto& fm = std::get<FeatureMatrix>(g.modalities[0].raw);
  for (uint32_t i = 0; i < cfg.num_nodes; ++i)
    for (uint32_t j = i + 1; j < cfg.num_nodes; ++j)
      if (g.labels[i] == g.labels[j])
        for (uint32_t k = 0; k < fm.cols; ++k)
          CHECK(fm.at(i, k) == fm.at(j, k));
}

TEST_CASE("within-community feature cosine exceeds cross-community cosine") {
  SynthConfig cfg;
  cfg.num_nodes = 600;
  cfg.num_communities = 3;
  cfg.p_in = 0.05;
  cfg.p_out = 0.005;
  cfg.dims = {24};
  cfg.noise_sigma = 0.3;
  cfg.seed = 17;
  auto g = synth_mmg(cfg);
  const auto& fm = std::get<FeatureMatrix>(g.modalities[0].raw);
  Rng rng(1);
  double within = 0, cross = 0;
  int nw = 0, nc = 0;
  for (int t = 0; t < 4000; ++t) {
    uint32_t a = uint32_t(rng.index(cfg.num_nodes));
    uint32_t b = uint32_t(rng.index(cfg.num_nodes));
    if (a == b) continue;
    double cs = row_cosine(fm, a, b);
    if (g.labels[a] == g.labels[b]) {
      within += cs;
      ++nw;
    } else {
      cross += cs;
      ++nc;
    }
  }
  CHECK(within / nw > cross / nc);
}

TEST_CASE("invalid synth parameters are rejected") {
  SynthConfig cfg;
  cfg.num_communities = 1;
  CHECK_THROWS_AS(synth_mmg(cfg), ValidationError);
  SynthConfig cfg2;
  cfg2.p_in = 0.01;
  cfg2.p_out = 0.05;
  CHECK_THROWS_AS(synth_mmg(cfg2), ValidationError);
  SynthConfig cfg3;
  cfg3.p_missing = 1.0;
  CHECK_THROWS_AS(synth_mmg(cfg3), ValidationError);
}
