#pragma once

// Reverse-mode differentiation over dense float64 tensors.
//
// A Tape owns every node created while building an expression; nodes are appended in
// evaluation order, so the reverse of creation order is a valid backward schedule.
// Parameters live outside the tape and receive accumulated gradients from backward().

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lorentzkit/rng.hpp"
#include "lorentzkit/tensor.hpp"

namespace lorentzkit {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad = Tensor(value.shape()); }
};

namespace ad {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid as long as the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  // Gradient after Tape::backward; empty tensor if the node never received one.
  const Tensor& grad() const;
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Called with the node's upstream gradient and its own forward value; accumulates
  // into parents via accumulate() / grad_buffer().
  using BackwardFn = std::function<void(Tape&, const Tensor& upstream, const Tensor& out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var constant(double v) { return constant(Tensor::scalar(v)); }
  // Differentiable leaf not bound to a parameter; read its grad() after backward.
  Var leaf(Tensor value);
  // Leaf bound to a parameter. Binding the same parameter twice returns the same node.
  Var param(Parameter& p);

  // Records an op node. The backward function is dropped when no parent requires grad.
  Var record(Tensor value, std::vector<Var> parents, BackwardFn backward);

  // Seeds d loss/d loss = 1 and walks nodes in reverse creation order. Node gradients
  // are reset at the start of every call; parameter gradients accumulate across calls.
  void backward(Var loss);

  void accumulate(Var target, const Tensor& g);
  // Raw-pointer variant for hot loops; returns nullptr when target needs no gradient.
  double* grad_buffer(Var target);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  friend class Var;
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    bool requires_grad = false;
    Parameter* param = nullptr;
  };

  Var push(Node node);

  std::deque<Node> nodes_;
  std::vector<std::pair<Parameter*, std::size_t>> bound_;
};

// ---- elementwise binary, numpy-style broadcasting ----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
Var operator+(Var a, double s);
Var operator-(Var a, double s);
Var operator*(Var a, double s);
Var operator/(Var a, double s);
Var operator+(double s, Var a);
Var operator-(double s, Var a);
Var operator*(double s, Var a);
Var operator/(double s, Var a);

// ---- elementwise unary ----
Var neg(Var x);
inline Var operator-(Var x) { return neg(x); }
Var pow(Var x, double exponent);
Var square(Var x);
Var sqrt(Var x);
Var exp(Var x);
Var log(Var x);
Var cosh(Var x);
Var sinh(Var x);
// acosh(max(x, floor)); zero subgradient where clamped.
Var acosh(Var x, double floor = 1.0 + 1e-15);
Var asinh(Var x);
// x for x > 0, alpha (e^x - 1) otherwise.
Var elu(Var x, double alpha = 1.0);
Var sigmoid(Var x);
// Clamp with zero gradient outside [lo, hi].
Var clamp(Var x, double lo, double hi);

// ---- linear algebra / layout ----
// a: [..., k], b: [k, m] -> [..., m]
Var matmul(Var a, Var b);
Var reshape(Var x, Shape shape);
Var permute(Var x, std::vector<std::size_t> axes);
Var transpose(Var x);  // 2-D
Var slice(Var x, int axis, std::size_t start, std::size_t length);
Var concat(std::span<const Var> parts, int axis);
inline Var concat(std::initializer_list<Var> parts, int axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}
// out.flat[i] = x.flat[index[i]]; backward scatter-adds.
Var take(Var x, std::vector<std::size_t> index, Shape out_shape);
// Rows along axis 0.
Var take_rows(Var x, std::span<const std::size_t> rows);

// ---- reductions ----
Var sum(Var x);
Var sum(Var x, int axis, bool keepdim = false);
Var mean(Var x);
Var mean(Var x, int axis, bool keepdim = false);
// Euclidean norm along axis; zero subgradient at the zero vector.
Var norm(Var x, int axis, bool keepdim = false);

// ---- convolution / pooling ----
struct Conv2dSpec {
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_top = 0, pad_bottom = 0, pad_left = 0, pad_right = 0;
  std::size_t groups = 1;

  // PyTorch-style "same" padding for stride 1: extra element goes right/bottom.
  static Conv2dSpec same(std::size_t kh, std::size_t kw, std::size_t groups = 1);
};
// Cross-correlation. x: [B, Cin, H, W], w: [Cout, Cin/groups, kh, kw] -> [B, Cout, Ho, Wo].
Var conv2d(Var x, Var w, const Conv2dSpec& spec);
// x: [B, C, H, W] -> [B, C, (H-kh)/sh+1, (W-kw)/sw+1]
Var avg_pool2d(Var x, std::size_t kh, std::size_t kw, std::size_t sh, std::size_t sw);

// Per-channel batch normalization of x: [B, C, H, W] with batch statistics. Writes the
// batch mean and biased variance per channel into the optional outputs.
Var batch_norm_train(Var x, Var gamma, Var beta, double eps, std::vector<double>* batch_mean = nullptr,
                     std::vector<double>* batch_var = nullptr);
// Same with fixed statistics (eval mode).
Var batch_norm_eval(Var x, Var gamma, Var beta, std::span<const double> mean, std::span<const double> var,
                    double eps);

// Multiplies by a Bernoulli(1-p)/(1-p) mask drawn from rng when training; identity otherwise.
Var dropout(Var x, double p, Rng& rng, bool training);
// Applies an explicit mask (already scaled).
Var apply_mask(Var x, const Tensor& mask);

// Mean softmax cross-entropy over rows. logits: [B, C], labels in [0, C).
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

// Sliced p-Wasserstein: proj and reference are [m, S]; each column is sorted, matched by
// rank and mean_i |a_(i) - b_(i)|^p is averaged over columns. Gradient flows to proj only.
Var sliced_wasserstein_pp(Var proj, const Tensor& reference, double p);

}  // namespace ad
}  // namespace lorentzkit
