#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ug2/errors.hpp"

namespace ug2 {

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

/// Dense row-major f64 array with an attached gradient slot.
struct Tensor {
  std::vector<size_t> shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until backward touches this tensor

  size_t numel() const { return data.size(); }
  // Tensors are rank 1 or 2; rows/cols view treats rank-1 as a single row.
  size_t rows() const { return shape.size() < 2 ? 1 : shape[0]; }
  size_t cols() const { return shape.empty() ? 0 : shape.back(); }
  bool is_scalar() const { return data.size() == 1; }

  double value() const {
    if (!is_scalar()) throw ContractError("Tensor::value: tensor is not scalar");
    return data[0];
  }

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
  void zero_grad() { grad.clear(); }
};

TensorPtr tensor(std::vector<size_t> shape, std::vector<double> data,
                 bool requires_grad = false);
TensorPtr zeros(std::vector<size_t> shape, bool requires_grad = false);
TensorPtr full(std::vector<size_t> shape, double v, bool requires_grad = false);
TensorPtr scalar(double v);

std::string shape_str(const std::vector<size_t>& s);

/// One recorded operation: op kind plus the closure that pushes the output's
/// gradient into the inputs (closures own refs to everything they need).
struct TapeNode {
  const char* op;
  std::function<void()> backward;
};

/// Append-only record of operations, replayed once in reverse by backward().
/// Constructing a Tape makes it the active recorder for the current thread;
/// destruction restores the previous one.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(const char* op, std::function<void()> fn);
  void backward(const TensorPtr& loss);
  size_t size() const { return nodes_.size(); }

  static Tape* active();

 private:
  std::vector<TapeNode> nodes_;
  Tape* prev_;
};

/// Disables recording for its scope (inference mode).
class NoGrad {
 public:
  NoGrad();
  ~NoGrad();
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;

 private:
  Tape* prev_;
};

/// Diagnostic scope: while alive, records the smallest |x| seen at any
/// relu/leaky_relu input. Finite-difference harnesses use it to reject
/// configurations that sit on an activation kink.
class KinkProbe {
 public:
  KinkProbe();
  ~KinkProbe();
  KinkProbe(const KinkProbe&) = delete;
  KinkProbe& operator=(const KinkProbe&) = delete;

  double min_abs() const { return min_abs_; }
  static KinkProbe* active();
  void observe(double x);

 private:
  double min_abs_ = 1e300;
  KinkProbe* prev_;
};

// ---- elementwise / scalar ----
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr add(const TensorPtr& a, double b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, double b);
TensorPtr sub(double a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, double b);
TensorPtr div(const TensorPtr& a, const TensorPtr& b);
TensorPtr pow_scalar(const TensorPtr& a, double p);
TensorPtr clamp_min(const TensorPtr& a, double lo);
TensorPtr relu(const TensorPtr& a);
TensorPtr leaky_relu(const TensorPtr& a, double slope);
TensorPtr exp(const TensorPtr& a);
TensorPtr log(const TensorPtr& a);

// ---- linear algebra / structure ----
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
TensorPtr transpose(const TensorPtr& a);
TensorPtr concat_cols(const TensorPtr& a, const TensorPtr& b);
TensorPtr add_rowvec(const TensorPtr& a, const TensorPtr& b);  // b: {cols}
TensorPtr scale_rows(const TensorPtr& a, const TensorPtr& s);  // s: {rows,1}
TensorPtr select_col(const TensorPtr& a, size_t k);            // -> {rows,1}
TensorPtr gather_rows(const TensorPtr& a, std::vector<uint32_t> idx);

// ---- reductions ----
TensorPtr row_mean(const TensorPtr& a);  // -> {rows,1}, mean along last axis
TensorPtr row_sum(const TensorPtr& a);   // -> {rows,1}
TensorPtr sum_all(const TensorPtr& a);   // -> {1}
TensorPtr mean_all(const TensorPtr& a);  // -> {1}
TensorPtr rowwise_dot(const TensorPtr& a, const TensorPtr& b);  // -> {rows,1}
TensorPtr l2norm_rows(const TensorPtr& a);                      // -> {rows,1}

// ---- normalization / losses ----
TensorPtr softmax(const TensorPtr& a);  // last axis, max-subtracted
TensorPtr mse(const TensorPtr& a, const TensorPtr& b);
// Mean negative log softmax-probability of the label class. labels in [0,C).
TensorPtr cross_entropy(const TensorPtr& logits, std::vector<int32_t> labels);

// Deterministic under (rate, seed); rate 0 is the identity; surviving
// entries scaled by 1/(1-rate).
TensorPtr dropout(const TensorPtr& a, double rate, uint64_t seed);

// ---- graph-shaped primitives (used by GNN layers) ----
// out[i] = mean of a's rows {i} ∪ {targets[offsets[i]..offsets[i+1])}.
TensorPtr neighbor_mean(const TensorPtr& a, std::span<const uint64_t> offsets,
                        std::span<const uint32_t> targets);
// Rows of `a` grouped into contiguous segments by `offsets` (len S+1).
TensorPtr segment_sum(const TensorPtr& a, std::vector<uint64_t> offsets);
// s: {E,1}; softmax within each contiguous segment.
TensorPtr segment_softmax(const TensorPtr& s, std::vector<uint64_t> offsets);

// Rows in `ids` replaced by `token` ({d}); gradient flows into token.
TensorPtr apply_mask_rows(const TensorPtr& x, std::vector<uint32_t> ids,
                          const TensorPtr& token);

// ---- optimizer ----
struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Decoupled weight decay with bias correction. Moments are tracked
/// per parameter, with per-parameter step counts so parameters that are
/// only updated on some steps (per-domain heads) stay correctly corrected.
class AdamWState {
 public:
  AdamWState(std::vector<std::pair<std::string, TensorPtr>> params,
             AdamWConfig cfg);

  /// Updates the selected parameters from their populated gradients, then
  /// zeroes those gradients. Empty selection means all parameters.
  void step(std::span<const size_t> indices = {});

  int64_t steps_taken() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }
  size_t num_params() const { return params_.size(); }

 private:
  struct Slot {
    std::vector<double> m, v;
    int64_t steps = 0;
  };
  std::vector<std::pair<std::string, TensorPtr>> params_;
  std::vector<Slot> slots_;
  AdamWConfig cfg_;
  int64_t t_ = 0;
};

// Global L2 norm of populated grads over the given parameters; scales them
// down in place when it exceeds max_norm (> 0). Returns the pre-clip norm.
double clip_grad_norm(std::span<const TensorPtr> params, double max_norm);

}  // namespace ug2
