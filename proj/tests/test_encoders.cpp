#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ug2/encoders.hpp"
#include "ug2/graph.hpp"
#include "ug2/rng.hpp"

using namespace ug2;

namespace {

MultimodalGraph tiny_graph(std::vector<std::vector<uint8_t>> presence,
                           std::vector<FeatureMatrix> feats) {
  MultimodalGraph g;
  const uint32_t n = uint32_t(presence[0].size());
  g.graph = CsrGraph::from_edges(n, {});
  g.domain_id = "t";
  for (size_t m = 0; m < presence.size(); ++m) {
    ModalityData md;
    md.name = "mod" + std::to_string(m);
    md.presence = presence[m];
    md.raw = feats[m];
    g.modalities.push_back(std::move(md));
  }
  return g;
}

FeatureMatrix mat(uint32_t rows, uint32_t cols, std::vector<float> v) {
  FeatureMatrix fm;
  fm.rows = rows;
  fm.cols = cols;
  fm.data = std::move(v);
  return fm;
}

}  // namespace

TEST_CASE("precomputed encoder with matching width is the identity") {
  ModalityEncoder enc{.name = "m", .kind = EncoderKind::precomputed, .out_dim = 3};
  auto fm = mat(2, 3, {1, 2, 3, 4, 5, 6});
  auto out = enc.encode(fm);
  CHECK(out.data == fm.data);
}

TEST_CASE("precomputed encoder projects mismatched widths deterministically") {
  ModalityEncoder enc{.name = "m", .kind = EncoderKind::precomputed,
                      .out_dim = 4, .channels = 3, .seed = 7};
  auto fm = mat(2, 6, {1, 0, 0, 1, 2, -1, 0.5f, 0, 1, 0, 0, 0});
  auto a = enc.encode(fm);
  auto b = enc.encode(fm);
  CHECK(a.cols == 4);
  CHECK(a.data == b.data);
  // different seed gives a different frozen map
  ModalityEncoder enc2 = enc;
  enc2.seed = 8;
  CHECK(enc2.encode(fm).data != a.data);
}

TEST_CASE("hash-text of the empty string is a zero row") {
  ModalityEncoder enc{.name = "t", .kind = EncoderKind::hash_text, .out_dim = 16};
  auto out = enc.encode(RawFeatures(std::vector<std::string>{"", "hello world"}));
  for (uint32_t j = 0; j < 16; ++j) CHECK(out.at(0, j) == 0.0f);
  double sq = 0;
  for (uint32_t j = 0; j < 16; ++j) sq += double(out.at(1, j)) * out.at(1, j);
  CHECK(sq == doctest::Approx(1.0));  // L2-normalized
}

TEST_CASE("hash-text doubles the repeated token's bucket magnitude") {
  ModalityEncoder enc{.name = "t", .kind = EncoderKind::hash_text, .out_dim = 64};
  auto out = enc.encode(RawFeatures(std::vector<std::string>{"a b a"}));
  std::vector<float> nz;
  for (uint32_t j = 0; j < 64; ++j)
    if (out.at(0, j) != 0.0f) nz.push_back(std::abs(out.at(0, j)));
  REQUIRE(nz.size() == 2);  // "a" and "b" land in distinct buckets at d=64
  const float hi = std::max(nz[0], nz[1]), lo = std::min(nz[0], nz[1]);
  CHECK(hi == doctest::Approx(2.0f * lo));
}

TEST_CASE("image stub produces normalized deterministic rows") {
  ModalityEncoder enc{.name = "img", .kind = EncoderKind::image_stub,
                      .out_dim = 8, .channels = 2, .seed = 3};
  // 2 channels x 4 pixels
  auto fm = mat(1, 8, {0.1f, 0.9f, 0.5f, 0.5f, 0.0f, 1.0f, 0.2f, 0.8f});
  auto a = enc.encode(fm);
  CHECK(a.cols == 8);
  double sq = 0;
  for (uint32_t j = 0; j < 8; ++j) sq += double(a.at(0, j)) * a.at(0, j);
  CHECK(sq == doctest::Approx(1.0));
  CHECK(enc.encode(fm).data == a.data);
}

TEST_CASE("image stub rejects widths not divisible by channels") {
  ModalityEncoder enc{.name = "img", .kind = EncoderKind::image_stub,
                      .out_dim = 8, .channels = 3};
  CHECK_THROWS_AS(enc.encode(mat(1, 8, std::vector<float>(8, 0.f))), ConfigError);
}

TEST_CASE("kind and payload mismatches are config errors") {
  ModalityEncoder enc{.name = "t", .kind = EncoderKind::hash_text, .out_dim = 8};
  CHECK_THROWS_AS(enc.encode(mat(1, 8, std::vector<float>(8, 0.f))), ConfigError);
  ModalityEncoder enc2{.name = "p", .kind = EncoderKind::precomputed, .out_dim = 8};
  CHECK_THROWS_AS(enc2.encode(RawFeatures(std::vector<std::string>{"x"})),
                  ConfigError);
}

TEST_CASE("single present modality passes through fusion unchanged") {
  auto g = tiny_graph({{1, 1}}, {mat(2, 2, {1, 2, 3, 4})});
  auto fused = fuse_modalities(g, {mat(2, 2, {1, 2, 3, 4})});
  CHECK(fused.at(0, 0) == 1.0f);
  CHECK(fused.at(1, 1) == 4.0f);
}

TEST_CASE("two present modalities average") {
  auto g = tiny_graph({{1}, {1}}, {mat(1, 2, {2, 4}), mat(1, 2, {4, 8})});
  auto fused = fuse_modalities(g, {mat(1, 2, {2, 4}), mat(1, 2, {4, 8})});
  CHECK(fused.at(0, 0) == 3.0f);
  CHECK(fused.at(0, 1) == 6.0f);
}

TEST_CASE("three-node mixed presence matches hand-computed means") {
  // presence: node0 {A}, node1 {A,B}, node2 {B}
  auto A = mat(3, 2, {1, 1, 2, 2, 9, 9});
  auto B = mat(3, 2, {7, 7, 4, 4, 6, 6});
  auto g = tiny_graph({{1, 1, 0}, {0, 1, 1}}, {A, B});
  auto fused = fuse_modalities(g, {A, B});
  CHECK(fused.at(0, 0) == 1.0f);
  CHECK(fused.at(1, 0) == 3.0f);  // (2+4)/2
  CHECK(fused.at(2, 0) == 6.0f);
}

TEST_CASE("node with empty modality set is a data error") {
  MultimodalGraph g = tiny_graph({{1, 0}}, {mat(2, 2, {1, 1, 2, 2})});
  CHECK_THROWS_AS(fuse_modalities(g, {mat(2, 2, {1, 1, 2, 2})}), ValidationError);
}

TEST_CASE("fusion is permutation equivariant") {
  Rng rng(21);
  const uint32_t n = 12, d = 5;
  FeatureMatrix A, B;
  A.rows = B.rows = n;
  A.cols = B.cols = d;
  A.data.resize(n * d);
  B.data.resize(n * d);
  for (auto* m : {&A, &B})
    for (float& v : m->data) v = float(rng.normal());
  std::vector<uint8_t> pa(n, 1), pb(n);
  for (uint32_t i = 0; i < n; ++i) pb[i] = rng.bernoulli(0.6) ? 1 : 0;
  auto g = tiny_graph({pa, pb}, {A, B});
  auto fused = fuse_modalities(g, {A, B});

  std::vector<uint32_t> perm(n);
  for (uint32_t i = 0; i < n; ++i) perm[i] = i;
  rng.shuffle(perm);
  FeatureMatrix A2 = A, B2 = B;
  std::vector<uint8_t> pa2(n), pb2(n);
  for (uint32_t i = 0; i < n; ++i) {
    for (uint32_t j = 0; j < d; ++j) {
      A2.data[size_t(perm[i]) * d + j] = A.at(i, j);
      B2.data[size_t(perm[i]) * d + j] = B.at(i, j);
    }
    pa2[perm[i]] = pa[i];
    pb2[perm[i]] = pb[i];
  }
  auto g2 = tiny_graph({pa2, pb2}, {A2, B2});
  auto fused2 = fuse_modalities(g2, {A2, B2});
  for (uint32_t i = 0; i < n; ++i)
    for (uint32_t j = 0; j < d; ++j)
      CHECK(fused2.at(perm[i], j) == fused.at(i, j));
}

TEST_CASE("duplicating a present modality leaves the fused row unchanged") {
  auto A = mat(1, 3, {1, 2, 3});
  auto g1 = tiny_graph({{1}}, {A});
  auto one = fuse_modalities(g1, {A});
  auto g2 = tiny_graph({{1}, {1}}, {A, A});
  auto two = fuse_modalities(g2, {A, A});
  for (uint32_t j = 0; j < 3; ++j) CHECK(one.at(0, j) == two.at(0, j));
}

TEST_CASE("encoders are frozen: identical output before and after time passes") {
  SynthConfig cfg;
  cfg.num_nodes = 40;
  cfg.dims = {10, 6};
  cfg.seed = 5;
  auto g = synth_mmg(cfg);
  std::vector<ModalityEncoder> encs = {
      {.name = "mod0", .kind = EncoderKind::precomputed, .out_dim = 8, .seed = 1},
      {.name = "mod1", .kind = EncoderKind::precomputed, .out_dim = 8, .seed = 1}};
  auto a = encode_and_fuse(g, encs, 8, 1);
  auto b = encode_and_fuse(g, encs, 8, 1);
  CHECK(a.data == b.data);
}
