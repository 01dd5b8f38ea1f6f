#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fd_check.hpp"
#include "ug2/rng.hpp"
#include "ug2/tensor.hpp"

using namespace ug2;
using ug2::testing::fd_gradients;

namespace {

TensorPtr random_tensor(std::vector<size_t> shape, Rng& rng, bool rg = true) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return tensor(std::move(shape), std::move(v), rg);
}

TensorPtr cosine_rows(const TensorPtr& x, const TensorPtr& z) {
  auto nx = clamp_min(l2norm_rows(x), 1e-12);
  auto nz = clamp_min(l2norm_rows(z), 1e-12);
  return div(rowwise_dot(x, z), mul(nx, nz));
}

}  // namespace

TEST_CASE("softmax of constant row is uniform") {
  auto y = softmax(tensor({3}, {0.0, 0.0, 0.0}));
  for (int i = 0; i < 3; ++i) CHECK(y->data[i] == doctest::Approx(1.0 / 3).epsilon(1e-15));
}

TEST_CASE("softmax rows sum to 1 and are strictly positive") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = random_tensor({8, 5}, rng, false);
    for (double& v : x->data) v *= 50.0;  // wide logits exercise max-subtraction
    auto y = softmax(x);
    for (size_t i = 0; i < 8; ++i) {
      double s = 0.0;
      for (size_t j = 0; j < 5; ++j) {
        CHECK(y->data[i * 5 + j] > 0.0);
        s += y->data[i * 5 + j];
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("matmul by identity is identity") {
  Rng rng(3);
  auto a = random_tensor({3, 4}, rng, false);
  auto eye = zeros({3, 3});
  for (int i = 0; i < 3; ++i) eye->data[i * 3 + i] = 1.0;
  auto out = matmul(eye, a);
  for (size_t i = 0; i < a->numel(); ++i) CHECK(out->data[i] == a->data[i]);
}

TEST_CASE("row_mean matches hand arithmetic") {
  auto m = row_mean(tensor({2, 2}, {1, 3, 5, 7}));
  CHECK(m->data[0] == 2.0);
  CHECK(m->data[1] == 6.0);
}

TEST_CASE("shape mismatch names both shapes") {
  auto a = zeros({2, 3});
  auto b = zeros({3, 3});
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("{2,3}"), ShapeError);
}

TEST_CASE("log of zero raises a numeric error") {
  CHECK_THROWS_AS(ug2::log(zeros({2})), NumericError);
}

TEST_CASE("backward on sum gives all-ones gradient") {
  auto x = tensor({3}, {1.0, -2.0, 0.5}, true);
  Tape tape;
  auto loss = sum_all(x);
  tape.backward(loss);
  for (int i = 0; i < 3; ++i) CHECK(x->grad[i] == 1.0);
}

TEST_CASE("backward requires scalar loss") {
  auto x = tensor({3}, {1.0, 2.0, 3.0}, true);
  Tape tape;
  auto y = add(x, 1.0);
  CHECK_THROWS_AS(tape.backward(y), ContractError);
}

TEST_CASE("mse at the minimum has zero gradient") {
  auto x0 = tensor({4}, {1, 2, 3, 4});
  auto x = tensor({4}, {1, 2, 3, 4}, true);
  Tape tape;
  auto loss = mse(x, x0);
  tape.backward(loss);
  CHECK(loss->value() == 0.0);
  for (int i = 0; i < 4; ++i) CHECK(x->grad[i] == 0.0);
}

TEST_CASE("scaled cosine loss gradient matches finite differences") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor({1, 8}, rng);
    auto z = random_tensor({1, 8}, rng);
    {
      Tape tape;
      auto loss = mean_all(pow_scalar(sub(1.0, cosine_rows(x, z)), 2.0));
      tape.backward(loss);
    }
    auto fwd = [&]() {
      NoGrad ng;
      return mean_all(pow_scalar(sub(1.0, cosine_rows(x, z)), 2.0))->value();
    };
    auto rep = fd_gradients(fwd, {x, z});
    CHECK(rep.max_rel_err < 1e-4);
  }
}

TEST_CASE("every op matches finite differences over random seeds") {
  struct Case {
    const char* name;
    std::vector<std::vector<size_t>> shapes;
    std::function<TensorPtr(const std::vector<TensorPtr>&)> build;
  };
  const std::vector<Case> cases = {
      {"add", {{3, 4}, {3, 4}}, [](auto& v) { return add(v[0], v[1]); }},
      {"sub", {{3, 4}, {3, 4}}, [](auto& v) { return sub(v[0], v[1]); }},
      {"mul", {{3, 4}, {3, 4}}, [](auto& v) { return mul(v[0], v[1]); }},
      {"div", {{2, 3}, {2, 3}},
       [](auto& v) { return div(v[0], add(mul(v[1], v[1]), 1.0)); }},
      {"matmul", {{3, 4}, {4, 2}}, [](auto& v) { return matmul(v[0], v[1]); }},
      {"transpose", {{3, 4}, {4, 3}},
       [](auto& v) { return mul(transpose(v[0]), v[1]); }},
      {"concat_cols", {{3, 2}, {3, 3}},
       [](auto& v) { return concat_cols(v[0], v[1]); }},
      {"row_mean", {{4, 5}}, [](auto& v) { return row_mean(v[0]); }},
      {"row_sum", {{4, 5}}, [](auto& v) { return row_sum(v[0]); }},
      {"relu", {{4, 5}}, [](auto& v) { return relu(v[0]); }},
      {"leaky_relu", {{4, 5}}, [](auto& v) { return leaky_relu(v[0], 0.2); }},
      {"exp", {{3, 3}}, [](auto& v) { return ug2::exp(v[0]); }},
      {"log", {{3, 3}},
       [](auto& v) { return ug2::log(add(mul(v[0], v[0]), 0.5)); }},
      {"softmax", {{4, 5}}, [](auto& v) { return softmax(v[0]); }},
      {"l2norm_rows", {{4, 5}}, [](auto& v) { return l2norm_rows(v[0]); }},
      {"mse", {{3, 4}, {3, 4}}, [](auto& v) { return mse(v[0], v[1]); }},
      {"pow", {{3, 3}},
       [](auto& v) { return pow_scalar(add(mul(v[0], v[0]), 0.1), 1.7); }},
      {"add_rowvec", {{3, 4}, {4}},
       [](auto& v) { return add_rowvec(v[0], v[1]); }},
      {"scale_rows", {{3, 4}, {3, 1}},
       [](auto& v) { return scale_rows(v[0], v[1]); }},
      {"select_col", {{3, 4}}, [](auto& v) { return select_col(v[0], 2); }},
      {"gather_rows", {{5, 3}},
       [](auto& v) { return gather_rows(v[0], {4, 0, 0, 2}); }},
      {"rowwise_dot", {{3, 4}, {3, 4}},
       [](auto& v) { return rowwise_dot(v[0], v[1]); }},
      {"dropout", {{6, 6}}, [](auto& v) { return dropout(v[0], 0.4, 99); }},
      {"segment_sum", {{6, 3}},
       [](auto& v) { return segment_sum(v[0], {0, 2, 2, 5, 6}); }},
      {"segment_softmax", {{6, 1}},
       [](auto& v) { return segment_softmax(v[0], {0, 3, 4, 6}); }},
      {"cross_entropy", {{4, 3}},
       [](auto& v) { return cross_entropy(v[0], {0, 2, 1, 1}); }},
  };

  for (const auto& c : cases) {
    CAPTURE(c.name);
    for (uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed * 131 + 5);
      std::vector<TensorPtr> leaves;
      for (const auto& s : c.shapes) leaves.push_back(random_tensor(s, rng));
      {
        Tape tape;
        auto loss = sum_all(mul(c.build(leaves), 1.0));
        tape.backward(loss);
      }
      auto fwd = [&]() {
        NoGrad ng;
        return sum_all(mul(c.build(leaves), 1.0))->value();
      };
      auto rep = fd_gradients(fwd, leaves);
      CAPTURE(seed);
      CHECK(rep.max_rel_err < 1e-4);
    }
  }
}

TEST_CASE("neighbor_mean averages self plus neighbors and backprops") {
  // path graph 0-1-2 in CSR form
  std::vector<uint64_t> offsets = {0, 1, 3, 4};
  std::vector<uint32_t> targets = {1, 0, 2, 1};
  auto x = tensor({3, 2}, {1, 0, 3, 6, 5, 0}, true);
  TensorPtr out;
  {
    Tape tape;
    out = neighbor_mean(x, offsets, targets);
    tape.backward(sum_all(out));
  }
  CHECK(out->data[0] == doctest::Approx(2.0));   // (1+3)/2
  CHECK(out->data[2] == doctest::Approx(3.0));   // (1+3+5)/3
  CHECK(out->data[3] == doctest::Approx(2.0));   // (0+6+0)/3
  auto fwd = [&]() {
    NoGrad ng;
    return sum_all(neighbor_mean(x, offsets, targets))->value();
  };
  CHECK(fd_gradients(fwd, {x}).max_rel_err < 1e-4);
}

TEST_CASE("apply_mask_rows routes gradient into the token") {
  auto x = tensor({4, 2}, {1, 1, 2, 2, 3, 3, 4, 4});
  auto token = zeros({2}, true);
  Tape tape;
  auto out = apply_mask_rows(x, {1, 3}, token);
  CHECK(out->data[2] == 0.0);
  CHECK(out->data[0] == 1.0);
  tape.backward(sum_all(out));
  CHECK(token->grad[0] == 2.0);  // |masked| * 1
  CHECK(token->grad[1] == 2.0);
}

TEST_CASE("dropout determinism and scaling") {
  Rng rng(4);
  auto x = random_tensor({10, 10}, rng, false);
  auto a = dropout(x, 0.3, 1234);
  auto b = dropout(x, 0.3, 1234);
  CHECK(a->data == b->data);
  auto c = dropout(x, 0.0, 77);
  CHECK(c->data == x->data);
  size_t kept = 0;
  for (size_t i = 0; i < x->numel(); ++i) {
    if (a->data[i] != 0.0) {
      ++kept;
      CHECK(a->data[i] == doctest::Approx(x->data[i] / 0.7));
    }
  }
  CHECK(kept > 40);
  CHECK(kept < 95);
}

TEST_CASE("tape replay determinism") {
  auto run = [](uint64_t seed) {
    Rng rng(seed);
    auto x = random_tensor({6, 6}, rng);
    auto w = random_tensor({6, 6}, rng);
    Tape tape;
    auto loss = mean_all(relu(matmul(dropout(x, 0.2, seed), w)));
    return loss->value();
  };
  CHECK(run(42) == run(42));
}

TEST_CASE("adamw: zero grads and zero decay leave params unchanged") {
  auto w = tensor({3}, {1.0, -2.0, 0.5}, true);
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  AdamWState opt({{"w", w}}, cfg);
  w->ensure_grad();
  opt.step();
  CHECK(w->data[0] == 1.0);
  CHECK(w->data[1] == -2.0);
  CHECK(w->data[2] == 0.5);
}

TEST_CASE("adamw: positive gradient strictly decreases the parameter") {
  auto w = tensor({1}, {0.7}, true);
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.0;
  AdamWState opt({{"w", w}}, cfg);
  w->ensure_grad();
  w->grad[0] = 0.3;
  opt.step();
  CHECK(w->data[0] < 0.7);
  CHECK(w->grad.empty());  // zeroed afterward
}

TEST_CASE("adamw: missing gradient raises naming the parameter") {
  auto w = tensor({1}, {0.7}, true);
  AdamWState opt({{"spd_head.w1", w}}, {});
  CHECK_THROWS_WITH_AS(opt.step(), doctest::Contains("spd_head.w1"),
                       ContractError);
}

TEST_CASE("adamw converges to the quadratic minimum") {
  Rng rng(19);
  std::vector<double> target(8);
  for (double& v : target) v = rng.uniform(-1.0, 1.0);
  auto wstar = tensor({8}, target);
  auto w = zeros({8}, true);
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.0;
  AdamWState opt({{"w", w}}, cfg);
  for (int it = 0; it < 200; ++it) {
    Tape tape;
    auto d = sub(w, wstar);
    tape.backward(sum_all(mul(d, d)));
    opt.step();
  }
  for (int i = 0; i < 8; ++i)
    CHECK(std::abs(w->data[i] - target[i]) < 1e-3);
}

TEST_CASE("clip_grad_norm scales to the requested bound") {
  auto a = tensor({2}, {0.0, 0.0}, true);
  a->ensure_grad();
  a->grad = {3.0, 4.0};
  std::vector<TensorPtr> ps = {a};
  double norm = clip_grad_norm(ps, 1.0);
  CHECK(norm == doctest::Approx(5.0));
  CHECK(a->grad[0] == doctest::Approx(0.6));
  CHECK(a->grad[1] == doctest::Approx(0.8));
}
