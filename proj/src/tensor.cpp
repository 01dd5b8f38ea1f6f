#include "ug2/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ug2/rng.hpp"

namespace ug2 {

namespace {

thread_local Tape* g_active_tape = nullptr;

void check_finite(const TensorPtr& t, const char* op) {
  // branchless scan: v - v is 0 for finite values, NaN for NaN/Inf
  double acc = 0.0;
  for (double v : t->data) acc += (v - v);
  if (acc != 0.0) {
    throw NumericError(std::string(op) + ": non-finite result");
  }
}

bool tracked(std::initializer_list<const TensorPtr*> inputs) {
  if (g_active_tape == nullptr) return false;
  for (const TensorPtr* p : inputs) {
    if ((*p)->requires_grad) return true;
  }
  return false;
}

TensorPtr make_out(std::vector<size_t> shape, size_t n) {
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->data.resize(n);
  return t;
}

void require_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
  if (a->shape != b->shape) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a->shape) +
                     " vs " + shape_str(b->shape));
  }
}

// Records the node when the output is tracked, marking it requires_grad.
void finish(const TensorPtr& out, const char* op, bool track,
            std::function<void()> fn) {
  check_finite(out, op);
  if (track) {
    out->requires_grad = true;
    g_active_tape->record(op, std::move(fn));
  }
}

}  // namespace

std::string shape_str(const std::vector<size_t>& s) {
  std::ostringstream os;
  os << "{";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "}";
  return os.str();
}

TensorPtr tensor(std::vector<size_t> shape, std::vector<double> data,
                 bool requires_grad) {
  size_t n = 1;
  for (size_t d : shape) {
    if (d == 0) throw ShapeError("tensor: zero extent in " + shape_str(shape));
    n *= d;
  }
  if (n != data.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " wants " +
                     std::to_string(n) + " values, got " +
                     std::to_string(data.size()));
  }
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->data = std::move(data);
  t->requires_grad = requires_grad;
  check_finite(t, "tensor");
  return t;
}

TensorPtr zeros(std::vector<size_t> shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

TensorPtr full(std::vector<size_t> shape, double v, bool requires_grad) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  return tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
}

TensorPtr scalar(double v) { return tensor({1}, {v}); }

// ---- Tape ----

Tape::Tape() : prev_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(const char* op, std::function<void()> fn) {
  nodes_.push_back({op, std::move(fn)});
}

void Tape::backward(const TensorPtr& loss) {
  if (!loss->is_scalar()) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_str(loss->shape));
  }
  if (nodes_.empty()) throw ContractError("backward: tape is empty");
  loss->ensure_grad();
  loss->grad[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
}

NoGrad::NoGrad() : prev_(g_active_tape) { g_active_tape = nullptr; }

NoGrad::~NoGrad() { g_active_tape = prev_; }

namespace {
thread_local KinkProbe* g_kink_probe = nullptr;
}

KinkProbe::KinkProbe() : prev_(g_kink_probe) { g_kink_probe = this; }

KinkProbe::~KinkProbe() { g_kink_probe = prev_; }

KinkProbe* KinkProbe::active() { return g_kink_probe; }

void KinkProbe::observe(double x) {
  min_abs_ = std::min(min_abs_, std::abs(x));
  if (prev_) prev_->observe(x);
}

// ---- elementwise ----

namespace {

template <typename Fwd, typename Bwd>
TensorPtr binary_ew(const TensorPtr& a, const TensorPtr& b, const char* op,
                    Fwd fwd, Bwd bwd) {
  require_same_shape(a, b, op);
  auto out = make_out(a->shape, a->numel());
  for (size_t i = 0; i < a->numel(); ++i) out->data[i] = fwd(a->data[i], b->data[i]);
  bool tr = tracked({&a, &b});
  finish(out, op, tr, [a, b, out, bwd]() {
    if (out->grad.empty()) return;
    if (a->requires_grad) a->ensure_grad();
    if (b->requires_grad) b->ensure_grad();
    for (size_t i = 0; i < out->grad.size(); ++i) {
      double ga, gb;
      bwd(a->data[i], b->data[i], out->grad[i], ga, gb);
      if (a->requires_grad) a->grad[i] += ga;
      if (b->requires_grad) b->grad[i] += gb;
    }
  });
  return out;
}

template <typename Fwd, typename Bwd>
TensorPtr unary_ew(const TensorPtr& a, const char* op, Fwd fwd, Bwd bwd) {
  auto out = make_out(a->shape, a->numel());
  for (size_t i = 0; i < a->numel(); ++i) out->data[i] = fwd(a->data[i]);
  bool tr = tracked({&a});
  finish(out, op, tr, [a, out, bwd]() {
    if (out->grad.empty() || !a->requires_grad) return;
    a->ensure_grad();
    for (size_t i = 0; i < out->grad.size(); ++i) {
      a->grad[i] += bwd(a->data[i], out->data[i]) * out->grad[i];
    }
  });
  return out;
}

}  // namespace

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
  return binary_ew(a, b, "add",
                   [](double x, double y) { return x + y; },
                   [](double, double, double g, double& ga, double& gb) {
                     ga = g;
                     gb = g;
                   });
}

TensorPtr add(const TensorPtr& a, double b) {
  return unary_ew(a, "add_scalar", [b](double x) { return x + b; },
                  [](double, double) { return 1.0; });
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
  return binary_ew(a, b, "sub",
                   [](double x, double y) { return x - y; },
                   [](double, double, double g, double& ga, double& gb) {
                     ga = g;
                     gb = -g;
                   });
}

TensorPtr sub(const TensorPtr& a, double b) { return add(a, -b); }

TensorPtr sub(double a, const TensorPtr& b) {
  return unary_ew(b, "rsub_scalar", [a](double x) { return a - x; },
                  [](double, double) { return -1.0; });
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
  return binary_ew(a, b, "mul",
                   [](double x, double y) { return x * y; },
                   [](double x, double y, double g, double& ga, double& gb) {
                     ga = g * y;
                     gb = g * x;
                   });
}

TensorPtr mul(const TensorPtr& a, double b) {
  return unary_ew(a, "mul_scalar", [b](double x) { return x * b; },
                  [b](double, double) { return b; });
}

TensorPtr div(const TensorPtr& a, const TensorPtr& b) {
  return binary_ew(a, b, "div",
                   [](double x, double y) { return x / y; },
                   [](double x, double y, double g, double& ga, double& gb) {
                     ga = g / y;
                     gb = -g * x / (y * y);
                   });
}

TensorPtr pow_scalar(const TensorPtr& a, double p) {
  return unary_ew(a, "pow_scalar",
                  [p](double x) { return std::pow(x, p); },
                  [p](double x, double y) {
                    if (p == 1.0) return 1.0;
                    if (x == 0.0) return 0.0;
                    return p * y / x;
                  });
}

TensorPtr clamp_min(const TensorPtr& a, double lo) {
  return unary_ew(a, "clamp_min",
                  [lo](double x) { return x < lo ? lo : x; },
                  [lo](double x, double) { return x < lo ? 0.0 : 1.0; });
}

TensorPtr relu(const TensorPtr& a) {
  if (KinkProbe* p = KinkProbe::active())
    for (double x : a->data) p->observe(x);
  return unary_ew(a, "relu", [](double x) { return x > 0 ? x : 0.0; },
                  [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

TensorPtr leaky_relu(const TensorPtr& a, double slope) {
  if (KinkProbe* p = KinkProbe::active())
    for (double x : a->data) p->observe(x);
  return unary_ew(a, "leaky_relu",
                  [slope](double x) { return x > 0 ? x : slope * x; },
                  [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

TensorPtr exp(const TensorPtr& a) {
  return unary_ew(a, "exp", [](double x) { return std::exp(x); },
                  [](double, double y) { return y; });
}

TensorPtr log(const TensorPtr& a) {
  return unary_ew(a, "log", [](double x) { return std::log(x); },
                  [](double x, double) { return 1.0 / x; });
}

// ---- linear algebra ----

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0]) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a->shape) +
                     " vs " + shape_str(b->shape));
  }
  const size_t m = a->shape[0], k = a->shape[1], n = b->shape[1];
  auto out = make_out({m, n}, m * n);
  const double* __restrict A = a->data.data();
  const double* __restrict B = b->data.data();
  double* __restrict C = out->data.data();
  if (n == 1) {
    // matrix-vector: per-row dot products (the generic kernel degenerates
    // to scalar updates here)
    for (size_t i = 0; i < m; ++i) {
      const double* __restrict ai = A + i * k;
      double acc = 0.0;
      for (size_t l = 0; l < k; ++l) acc += ai[l] * B[l];
      C[i] = acc;
    }
  } else {
    for (size_t i = 0; i < m; ++i) {
      double* __restrict ci = C + i * n;
      const double* __restrict ai = A + i * k;
      for (size_t l = 0; l < k; ++l) {
        const double av = ai[l];
        const double* __restrict bl = B + l * n;
        for (size_t j = 0; j < n; ++j) ci[j] += av * bl[j];
      }
    }
  }
  bool tr = tracked({&a, &b});
  finish(out, "matmul", tr, [a, b, out, m, k, n]() {
    if (out->grad.empty()) return;
    const double* __restrict G = out->grad.data();
    if (a->requires_grad) {
      a->ensure_grad();
      double* __restrict GA = a->grad.data();
      const double* __restrict B = b->data.data();
      if (n == 1) {
        for (size_t i = 0; i < m; ++i) {
          const double gi = G[i];
          double* __restrict gai = GA + i * k;
          for (size_t l = 0; l < k; ++l) gai[l] += gi * B[l];
        }
      } else {
        for (size_t i = 0; i < m; ++i) {
          const double* __restrict gi = G + i * n;
          double* __restrict gai = GA + i * k;
          for (size_t l = 0; l < k; ++l) {
            const double* __restrict bl = B + l * n;
            double acc = 0.0;
            for (size_t j = 0; j < n; ++j) acc += gi[j] * bl[j];
            gai[l] += acc;
          }
        }
      }
    }
    if (b->requires_grad) {
      b->ensure_grad();
      double* __restrict GB = b->grad.data();
      const double* __restrict A = a->data.data();
      if (n == 1) {
        for (size_t i = 0; i < m; ++i) {
          const double gi = G[i];
          const double* __restrict ai = A + i * k;
          for (size_t l = 0; l < k; ++l) GB[l] += ai[l] * gi;
        }
      } else {
        for (size_t i = 0; i < m; ++i) {
          const double* __restrict gi = G + i * n;
          const double* __restrict ai = A + i * k;
          for (size_t l = 0; l < k; ++l) {
            const double av = ai[l];
            double* __restrict gbl = GB + l * n;
            for (size_t j = 0; j < n; ++j) gbl[j] += av * gi[j];
          }
        }
      }
    }
  });
  return out;
}

TensorPtr transpose(const TensorPtr& a) {
  if (a->shape.size() != 2) {
    throw ShapeError("transpose: rank-2 tensor required, got " +
                     shape_str(a->shape));
  }
  const size_t m = a->shape[0], n = a->shape[1];
  auto out = make_out({n, m}, m * n);
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) out->data[j * m + i] = a->data[i * n + j];
  bool tr = tracked({&a});
  finish(out, "transpose", tr, [a, out, m, n]() {
    if (out->grad.empty() || !a->requires_grad) return;
    a->ensure_grad();
    for (size_t i = 0; i < m; ++i)
      for (size_t j = 0; j < n; ++j) a->grad[i * n + j] += out->grad[j * m + i];
  });
  return out;
}

TensorPtr concat_cols(const TensorPtr& a, const TensorPtr& b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[0] != b->shape[0]) {
    throw ShapeError("concat_cols: row mismatch " + shape_str(a->shape) +
                     " vs " + shape_str(b->shape));
  }
  const size_t m = a->shape[0], ca = a->shape[1], cb = b->shape[1];
  auto out = make_out({m, ca + cb}, m * (ca + cb));
  for (size_t i = 0; i < m; ++i) {
    std::copy_n(&a->data[i * ca], ca, &out->data[i * (ca + cb)]);
    std::copy_n(&b->data[i * cb], cb, &out->data[i * (ca + cb) + ca]);
  }
  bool tr = tracked({&a, &b});
  finish(out, "concat_cols", tr, [a, b, out, m, ca, cb]() {
    if (out->grad.empty()) return;
    if (a->requires_grad) {
      a->ensure_grad();
      for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < ca; ++j)
          a->grad[i * ca + j] += out->grad[i * (ca + cb) + j];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < cb; ++j)
          b->grad[i * cb + j] += out->grad[i * (ca + cb) + ca + j];
    }
  });
  return out;
}

TensorPtr add_rowvec(const TensorPtr& a, const TensorPtr& b) {
  if (b->numel() != a->cols()) {
    throw ShapeError("add_rowvec: bias " + shape_str(b->shape) +
                     " does not match columns of " + shape_str(a->shape));
  }
  const size_t m = a->rows(), n = a->cols();
  auto out = make_out(a->shape, a->numel());
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j)
      out->data[i * n + j] = a->data[i * n + j] + b->data[j];
  bool tr = tracked({&a, &b});
  finish(out, "add_rowvec", tr, [a, b, out, m, n]() {
    if (out->grad.empty()) return;
    if (a->requires_grad) {
      a->ensure_grad();
      for (size_t i = 0; i < m * n; ++i) a->grad[i] += out->grad[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) b->grad[j] += out->grad[i * n + j];
    }
  });
  return out;
}

TensorPtr scale_rows(const TensorPtr& a, const TensorPtr& s) {
  if (s->numel() != a->rows()) {
    throw ShapeError("scale_rows: scale " + shape_str(s->shape) +
                     " does not match rows of " + shape_str(a->shape));
  }
  const size_t m = a->rows(), n = a->cols();
  auto out = make_out(a->shape, a->numel());
  for (size_t i = 0; i < m; ++i) {
    const double sv = s->data[i];
    for (size_t j = 0; j < n; ++j) out->data[i * n + j] = a->data[i * n + j] * sv;
  }
  bool tr = tracked({&a, &s});
  finish(out, "scale_rows", tr, [a, s, out, m, n]() {
    if (out->grad.empty()) return;
    if (a->requires_grad) {
      a->ensure_grad();
      for (size_t i = 0; i < m; ++i) {
        const double sv = s->data[i];
        for (size_t j = 0; j < n; ++j) a->grad[i * n + j] += out->grad[i * n + j] * sv;
      }
    }
    if (s->requires_grad) {
      s->ensure_grad();
      for (size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (size_t j = 0; j < n; ++j) acc += out->grad[i * n + j] * a->data[i * n + j];
        s->grad[i] += acc;
      }
    }
  });
  return out;
}

TensorPtr select_col(const TensorPtr& a, size_t k) {
  if (a->shape.size() != 2 || k >= a->shape[1]) {
    throw ShapeError("select_col: column " + std::to_string(k) +
                     " out of range for " + shape_str(a->shape));
  }
  const size_t m = a->shape[0], n = a->shape[1];
  auto out = make_out({m, 1}, m);
  for (size_t i = 0; i < m; ++i) out->data[i] = a->data[i * n + k];
  bool tr = tracked({&a});
  finish(out, "select_col", tr, [a, out, m, n, k]() {
    if (out->grad.empty() || !a->requires_grad) return;
    a->ensure_grad();
    for (size_t i = 0; i < m; ++i) a->grad[i * n + k] += out->grad[i];
  });
  return out;
}

TensorPtr gather_rows(const TensorPtr& a, std::vector<uint32_t> idx) {
  const size_t m = a->rows(), n = a->cols();
  for (uint32_t id : idx) {
    if (id >= m) {
      throw ShapeError("gather_rows: row " + std::to_string(id) +
                       " out of range for " + shape_str(a->shape));
    }
  }
  auto out = make_out({idx.size(), n}, idx.size() * n);
  for (size_t i = 0; i < idx.size(); ++i)
    std::copy_n(&a->data[size_t(idx[i]) * n], n, &out->data[i * n]);
  bool tr = tracked({&a});
  finish(out, "gather_rows", tr, [a, out, idx = std::move(idx), n]() {
    if (out->grad.empty() || !a->requires_grad) return;
    a->ensure_grad();
    for (size_t i = 0; i < idx.size(); ++i)
      for (size_t j = 0; j < n; ++j)
        a->grad[size_t(idx[i]) * n + j] += out->grad[i * n + j];
  });
  return out;
}

// ---- reductions ----

namespace {

TensorPtr row_reduce(const TensorPtr& a, const char* op, bool mean) {
  const size_t m = a->rows(), n = a->cols();
  auto out = make_out({m, 1}, m);
  const double inv = mean ? 1.0 / double(n) : 1.0;
  for (size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (size_t j = 0; j < n; ++j) acc += a->data[i * n + j];
    out->data[i] = acc * inv;
  }
  bool tr = tracked({&a});
  finish(out, op, tr, [a, out, m, n, inv]() {
    if (out->grad.empty() || !a->requires_grad) return;
    a->ensure_grad();
    for (size_t i = 0; i < m; ++i) {
      const double g = out->grad[i] * inv;
      for (size_t j = 0; j < n; ++j) a->grad[i * n + j] += g;
    }
  });
  return out;
}

}  // namespace

TensorPtr row_mean(const TensorPtr& a) { return row_reduce(a, "row_mean", true); }

TensorPtr row_sum(const TensorPtr& a) { return row_reduce(a, "row_sum", false); }

TensorPtr sum_all(const TensorPtr& a) {
  auto out = make_out({1}, 1);
  double acc = 0.0;
  for (double v : a->data) acc += v;
  out->data[0] = acc;
  bool tr = tracked({&a});
  finish(out, "sum_all", tr, [a, out]() {
    if (out->grad.empty() || !a->requires_grad) return;
    a->ensure_grad();
    const double g = out->grad[0];
    for (double& gv : a->grad) gv += g;
  });
  return out;
}

TensorPtr mean_all(const TensorPtr& a) {
  return mul(sum_all(a), 1.0 / double(a->numel()));
}

TensorPtr rowwise_dot(const TensorPtr& a, const TensorPtr& b) {
  require_same_shape(a, b, "rowwise_dot");
  const size_t m = a->rows(), n = a->cols();
  auto out = make_out({m, 1}, m);
  for (size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (size_t j = 0; j < n; ++j) acc += a->data[i * n + j] * b->data[i * n + j];
    out->data[i] = acc;
  }
  bool tr = tracked({&a, &b});
  finish(out, "rowwise_dot", tr, [a, b, out, m, n]() {
    if (out->grad.empty()) return;
    if (a->requires_grad) a->ensure_grad();
    if (b->requires_grad) b->ensure_grad();
    for (size_t i = 0; i < m; ++i) {
      const double g = out->grad[i];
      for (size_t j = 0; j < n; ++j) {
        if (a->requires_grad) a->grad[i * n + j] += g * b->data[i * n + j];
        if (b->requires_grad) b->grad[i * n + j] += g * a->data[i * n + j];
      }
    }
  });
  return out;
}

TensorPtr l2norm_rows(const TensorPtr& a) {
  const size_t m = a->rows(), n = a->cols();
  auto out = make_out({m, 1}, m);
  for (size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (size_t j = 0; j < n; ++j) acc += a->data[i * n + j] * a->data[i * n + j];
    out->data[i] = std::sqrt(acc);
  }
  bool tr = tracked({&a});
  finish(out, "l2norm_rows", tr, [a, out, m, n]() {
    if (out->grad.empty() || !a->requires_grad) return;
    a->ensure_grad();
    for (size_t i = 0; i < m; ++i) {
      const double norm = out->data[i];
      if (norm <= 1e-300) continue;  // zero row: subgradient 0
      const double g = out->grad[i] / norm;
      for (size_t j = 0; j < n; ++j) a->grad[i * n + j] += g * a->data[i * n + j];
    }
  });
  return out;
}

// ---- normalization / losses ----

TensorPtr softmax(const TensorPtr& a) {
  const size_t m = a->rows(), n = a->cols();
  if (n == 0) throw ShapeError("softmax: empty last axis");
  auto out = make_out(a->shape, a->numel());
  for (size_t i = 0; i < m; ++i) {
    const double* x = &a->data[i * n];
    double* y = &out->data[i * n];
    double mx = x[0];
    for (size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (size_t j = 0; j < n; ++j) {
      y[j] = std::exp(x[j] - mx);
      sum += y[j];
    }
    for (size_t j = 0; j < n; ++j) y[j] /= sum;
  }
  bool tr = tracked({&a});
  finish(out, "softmax", tr, [a, out, m, n]() {
    if (out->grad.empty() || !a->requires_grad) return;
    a->ensure_grad();
    for (size_t i = 0; i < m; ++i) {
      const double* y = &out->data[i * n];
      const double* g = &out->grad[i * n];
      double dot = 0.0;
      for (size_t j = 0; j < n; ++j) dot += y[j] * g[j];
      for (size_t j = 0; j < n; ++j) a->grad[i * n + j] += y[j] * (g[j] - dot);
    }
  });
  return out;
}

TensorPtr mse(const TensorPtr& a, const TensorPtr& b) {
  require_same_shape(a, b, "mse");
  const size_t n = a->numel();
  auto out = make_out({1}, 1);
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double d = a->data[i] - b->data[i];
    acc += d * d;
  }
  out->data[0] = acc / double(n);
  bool tr = tracked({&a, &b});
  finish(out, "mse", tr, [a, b, out, n]() {
    if (out->grad.empty()) return;
    const double g = 2.0 * out->grad[0] / double(n);
    if (a->requires_grad) a->ensure_grad();
    if (b->requires_grad) b->ensure_grad();
    for (size_t i = 0; i < n; ++i) {
      const double d = a->data[i] - b->data[i];
      if (a->requires_grad) a->grad[i] += g * d;
      if (b->requires_grad) b->grad[i] -= g * d;
    }
  });
  return out;
}

TensorPtr cross_entropy(const TensorPtr& logits, std::vector<int32_t> labels) {
  const size_t m = logits->rows(), n = logits->cols();
  if (labels.size() != m) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(m) + " rows");
  }
  for (int32_t y : labels) {
    if (y < 0 || size_t(y) >= n)
      throw ContractError("cross_entropy: label " + std::to_string(y) +
                          " outside [0," + std::to_string(n) + ")");
  }
  // Saves per-row probabilities for the backward pass.
  auto probs = std::make_shared<std::vector<double>>(m * n);
  auto out = make_out({1}, 1);
  double acc = 0.0;
  for (size_t i = 0; i < m; ++i) {
    const double* x = &logits->data[i * n];
    double* p = &(*probs)[i * n];
    double mx = x[0];
    for (size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (size_t j = 0; j < n; ++j) {
      p[j] = std::exp(x[j] - mx);
      sum += p[j];
    }
    for (size_t j = 0; j < n; ++j) p[j] /= sum;
    acc -= std::log(std::max(p[labels[i]], 1e-300));
  }
  out->data[0] = acc / double(m);
  bool tr = tracked({&logits});
  finish(out, "cross_entropy", tr,
         [logits, out, probs, labels = std::move(labels), m, n]() {
           if (out->grad.empty() || !logits->requires_grad) return;
           logits->ensure_grad();
           const double g = out->grad[0] / double(m);
           for (size_t i = 0; i < m; ++i) {
             for (size_t j = 0; j < n; ++j) {
               double delta = (size_t(labels[i]) == j) ? 1.0 : 0.0;
               logits->grad[i * n + j] += g * ((*probs)[i * n + j] - delta);
             }
           }
         });
  return out;
}

TensorPtr dropout(const TensorPtr& a, double rate, uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ContractError("dropout: rate must be in [0,1), got " +
                        std::to_string(rate));
  }
  if (rate == 0.0) return add(a, 0.0);  // identity, still differentiable
  const size_t n = a->numel();
  auto keep = std::make_shared<std::vector<uint8_t>>(n);
  Rng rng(seed);
  const double scale = 1.0 / (1.0 - rate);
  auto out = make_out(a->shape, n);
  for (size_t i = 0; i < n; ++i) {
    (*keep)[i] = rng.uniform() >= rate ? 1 : 0;
    out->data[i] = (*keep)[i] ? a->data[i] * scale : 0.0;
  }
  bool tr = tracked({&a});
  finish(out, "dropout", tr, [a, out, keep, scale, n]() {
    if (out->grad.empty() || !a->requires_grad) return;
    a->ensure_grad();
    for (size_t i = 0; i < n; ++i)
      if ((*keep)[i]) a->grad[i] += out->grad[i] * scale;
  });
  return out;
}

// ---- graph-shaped primitives ----

TensorPtr neighbor_mean(const TensorPtr& a, std::span<const uint64_t> offsets,
                        std::span<const uint32_t> targets) {
  const size_t m = a->rows(), n = a->cols();
  if (offsets.size() != m + 1) {
    throw ShapeError("neighbor_mean: offsets length " +
                     std::to_string(offsets.size()) + " for " +
                     std::to_string(m) + " rows");
  }
  auto out = make_out(a->shape, a->numel());
  for (size_t i = 0; i < m; ++i) {
    double* o = &out->data[i * n];
    std::copy_n(&a->data[i * n], n, o);  // self contribution
    for (uint64_t e = offsets[i]; e < offsets[i + 1]; ++e) {
      const double* r = &a->data[size_t(targets[e]) * n];
      for (size_t j = 0; j < n; ++j) o[j] += r[j];
    }
    const double inv = 1.0 / double(offsets[i + 1] - offsets[i] + 1);
    for (size_t j = 0; j < n; ++j) o[j] *= inv;
  }
  bool tr = tracked({&a});
  std::vector<uint64_t> offs(offsets.begin(), offsets.end());
  std::vector<uint32_t> tgts(targets.begin(), targets.end());
  finish(out, "neighbor_mean", tr,
         [a, out, offs = std::move(offs), tgts = std::move(tgts), m, n]() {
           if (out->grad.empty() || !a->requires_grad) return;
           a->ensure_grad();
           for (size_t i = 0; i < m; ++i) {
             const double inv = 1.0 / double(offs[i + 1] - offs[i] + 1);
             const double* g = &out->grad[i * n];
             double* gs = &a->grad[i * n];
             for (size_t j = 0; j < n; ++j) gs[j] += g[j] * inv;
             for (uint64_t e = offs[i]; e < offs[i + 1]; ++e) {
               double* gt = &a->grad[size_t(tgts[e]) * n];
               for (size_t j = 0; j < n; ++j) gt[j] += g[j] * inv;
             }
           }
         });
  return out;
}

TensorPtr segment_sum(const TensorPtr& a, std::vector<uint64_t> offsets) {
  const size_t m = a->rows(), n = a->cols();
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != m) {
    throw ShapeError("segment_sum: offsets must cover all " +
                     std::to_string(m) + " rows");
  }
  const size_t s = offsets.size() - 1;
  auto out = make_out({s, n}, s * n);
  for (size_t i = 0; i < s; ++i) {
    double* o = &out->data[i * n];
    for (uint64_t r = offsets[i]; r < offsets[i + 1]; ++r) {
      const double* src = &a->data[size_t(r) * n];
      for (size_t j = 0; j < n; ++j) o[j] += src[j];
    }
  }
  bool tr = tracked({&a});
  finish(out, "segment_sum", tr, [a, out, offsets = std::move(offsets), n]() {
    if (out->grad.empty() || !a->requires_grad) return;
    a->ensure_grad();
    for (size_t i = 0; i + 1 < offsets.size(); ++i) {
      const double* g = &out->grad[i * n];
      for (uint64_t r = offsets[i]; r < offsets[i + 1]; ++r) {
        double* ga = &a->grad[size_t(r) * n];
        for (size_t j = 0; j < n; ++j) ga[j] += g[j];
      }
    }
  });
  return out;
}

TensorPtr segment_softmax(const TensorPtr& s, std::vector<uint64_t> offsets) {
  if (s->cols() != 1) {
    throw ShapeError("segment_softmax: expected {E,1}, got " +
                     shape_str(s->shape));
  }
  const size_t m = s->rows();
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != m) {
    throw ShapeError("segment_softmax: offsets must cover all rows");
  }
  auto out = make_out(s->shape, m);
  for (size_t i = 0; i + 1 < offsets.size(); ++i) {
    const uint64_t lo = offsets[i], hi = offsets[i + 1];
    if (lo == hi) continue;
    double mx = s->data[lo];
    for (uint64_t r = lo + 1; r < hi; ++r) mx = std::max(mx, s->data[r]);
    double sum = 0.0;
    for (uint64_t r = lo; r < hi; ++r) {
      out->data[r] = std::exp(s->data[r] - mx);
      sum += out->data[r];
    }
    for (uint64_t r = lo; r < hi; ++r) out->data[r] /= sum;
  }
  bool tr = tracked({&s});
  finish(out, "segment_softmax", tr, [s, out, offsets = std::move(offsets)]() {
    if (out->grad.empty() || !s->requires_grad) return;
    s->ensure_grad();
    for (size_t i = 0; i + 1 < offsets.size(); ++i) {
      const uint64_t lo = offsets[i], hi = offsets[i + 1];
      double dot = 0.0;
      for (uint64_t r = lo; r < hi; ++r) dot += out->data[r] * out->grad[r];
      for (uint64_t r = lo; r < hi; ++r)
        s->grad[r] += out->data[r] * (out->grad[r] - dot);
    }
  });
  return out;
}

TensorPtr apply_mask_rows(const TensorPtr& x, std::vector<uint32_t> ids,
                          const TensorPtr& token) {
  const size_t m = x->rows(), n = x->cols();
  if (token->numel() != n) {
    throw ShapeError("apply_mask_rows: token " + shape_str(token->shape) +
                     " vs feature width " + std::to_string(n));
  }
  for (uint32_t id : ids) {
    if (id >= m)
      throw ShapeError("apply_mask_rows: row " + std::to_string(id) +
                       " out of range");
  }
  auto out = make_out(x->shape, x->numel());
  out->data = x->data;
  for (uint32_t id : ids)
    std::copy_n(token->data.data(), n, &out->data[size_t(id) * n]);
  bool tr = tracked({&x, &token});
  finish(out, "apply_mask_rows", tr,
         [x, token, out, ids = std::move(ids), m, n]() {
           if (out->grad.empty()) return;
           std::vector<uint8_t> masked(m, 0);
           for (uint32_t id : ids) masked[id] = 1;
           if (token->requires_grad) {
             token->ensure_grad();
             for (uint32_t id : ids)
               for (size_t j = 0; j < n; ++j)
                 token->grad[j] += out->grad[size_t(id) * n + j];
           }
           if (x->requires_grad) {
             x->ensure_grad();
             for (size_t i = 0; i < m; ++i) {
               if (masked[i]) continue;
               for (size_t j = 0; j < n; ++j)
                 x->grad[i * n + j] += out->grad[i * n + j];
             }
           }
         });
  return out;
}

// ---- optimizer ----

AdamWState::AdamWState(std::vector<std::pair<std::string, TensorPtr>> params,
                       AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  slots_.resize(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    slots_[i].m.assign(params_[i].second->numel(), 0.0);
    slots_[i].v.assign(params_[i].second->numel(), 0.0);
  }
}

void AdamWState::step(std::span<const size_t> indices) {
  std::vector<size_t> all;
  if (indices.empty()) {
    all.resize(params_.size());
    for (size_t i = 0; i < all.size(); ++i) all[i] = i;
    indices = all;
  }
  ++t_;
  for (size_t idx : indices) {
    auto& [name, p] = params_[idx];
    if (p->grad.empty()) {
      throw ContractError("adamw_step: parameter '" + name +
                          "' has no gradient");
    }
    Slot& s = slots_[idx];
    s.steps += 1;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(s.steps));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(s.steps));
    for (size_t i = 0; i < p->numel(); ++i) {
      const double g = p->grad[i];
      s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g;
      s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = s.m[i] / bc1;
      const double vhat = s.v[i] / bc2;
      p->data[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                               cfg_.weight_decay * p->data[i]);
      if (!std::isfinite(p->data[i])) {
        throw NumericError("adamw_step: parameter '" + name +
                           "' became non-finite");
      }
    }
    p->zero_grad();
  }
}

double clip_grad_norm(std::span<const TensorPtr> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (p->grad.empty()) continue;
    for (double g : p->grad) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (const auto& p : params) {
      if (p->grad.empty()) continue;
      for (double& g : p->grad) g *= scale;
    }
  }
  return norm;
}

}  // namespace ug2
