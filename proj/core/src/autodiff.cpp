#include "lorentzkit/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "lorentzkit/error.hpp"

namespace lorentzkit::ad {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

// ---------------------------------------------------------------------------
// Var / Tape

const Tensor& Var::value() const { return tape_->nodes_[id_].value; }
const Tensor& Var::grad() const { return tape_->nodes_[id_].grad; }
bool Var::requires_grad() const { return tape_->nodes_[id_].requires_grad; }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::param(Parameter& p) {
  for (const auto& [ptr, id] : bound_) {
    if (ptr == &p) return Var(this, id);
  }
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  Var v = push(std::move(n));
  bound_.emplace_back(&p, v.id());
  return v;
}

Var Tape::record(Tensor value, std::vector<Var> parents, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    if (p.tape_ != this) throw ValidationError("autodiff: operands live on different tapes");
    n.requires_grad = n.requires_grad || nodes_[p.id_].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw ValidationError("backward: loss lives on another tape");
  if (loss.value().size() != 1) {
    throw ValidationError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  nodes_[loss.id_].grad = Tensor(loss.shape(), 1.0);
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, n.grad, n.value);
  }
  for (const auto& [param, id] : bound_) {
    const Tensor& g = nodes_[id].grad;
    if (g.empty()) continue;
    if (param->grad.shape() != param->value.shape()) param->zero_grad();
    for (std::size_t k = 0; k < g.size(); ++k) param->grad[k] += g[k];
  }
}

double* Tape::grad_buffer(Var target) {
  Node& n = nodes_[target.id_];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad.data();
}

void Tape::accumulate(Var target, const Tensor& g) {
  double* buf = grad_buffer(target);
  if (!buf) return;
  if (g.size() != target.value().size()) {
    throw DimensionError("gradient of size " + std::to_string(g.size()) + " for node of shape " +
                         shape_str(target.shape()));
  }
  for (std::size_t k = 0; k < g.size(); ++k) buf[k] += g[k];
}

// ---------------------------------------------------------------------------
// Broadcasting

namespace {

struct BroadcastPlan {
  enum class Kind { kSame, kScalarA, kScalarB, kSuffixA, kSuffixB, kGeneral };
  Kind kind = Kind::kGeneral;
  Shape out;
  std::vector<std::size_t> stride_a, stride_b;  // per out dim, 0 where broadcast
};

Shape strip_leading_ones(const Shape& s) {
  std::size_t i = 0;
  while (i < s.size() && s[i] == 1) ++i;
  return Shape(s.begin() + static_cast<std::ptrdiff_t>(i), s.end());
}

bool is_suffix(const Shape& small, const Shape& big) {
  const Shape s = strip_leading_ones(small);
  if (s.size() > big.size()) return false;
  return std::equal(s.begin(), s.end(), big.end() - static_cast<std::ptrdiff_t>(s.size()));
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
  BroadcastPlan p;
  const std::size_t nd = std::max(a.size(), b.size());
  p.out.assign(nd, 1);
  for (std::size_t i = 0; i < nd; ++i) {
    const std::size_t da = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
    const std::size_t db = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    p.out[i] = std::max(da, db);
  }
  const std::size_t na = numel(a), nb = numel(b), no = numel(p.out);
  if (na == no && nb == no) {
    p.kind = BroadcastPlan::Kind::kSame;
  } else if (nb == 1) {
    p.kind = BroadcastPlan::Kind::kScalarB;
  } else if (na == 1) {
    p.kind = BroadcastPlan::Kind::kScalarA;
  } else if (na == no && is_suffix(b, p.out)) {
    p.kind = BroadcastPlan::Kind::kSuffixB;
  } else if (nb == no && is_suffix(a, p.out)) {
    p.kind = BroadcastPlan::Kind::kSuffixA;
  } else {
    p.kind = BroadcastPlan::Kind::kGeneral;
    auto strides = [&](const Shape& s) {
      std::vector<std::size_t> st(nd, 0);
      std::size_t acc = 1;
      for (std::size_t i = nd; i-- > 0;) {
        const std::size_t off = nd - s.size();
        const std::size_t d = i < off ? 1 : s[i - off];
        st[i] = d == 1 ? 0 : acc;
        acc *= d;
      }
      return st;
    };
    p.stride_a = strides(a);
    p.stride_b = strides(b);
  }
  return p;
}

template <typename F>
void broadcast_each(const BroadcastPlan& p, std::size_t na, std::size_t nb, F&& f) {
  const std::size_t no = numel(p.out);
  using K = BroadcastPlan::Kind;
  switch (p.kind) {
    case K::kSame:
      for (std::size_t i = 0; i < no; ++i) f(i, i, i);
      return;
    case K::kScalarB:
      for (std::size_t i = 0; i < no; ++i) f(i, i, std::size_t{0});
      return;
    case K::kScalarA:
      for (std::size_t i = 0; i < no; ++i) f(i, std::size_t{0}, i);
      return;
    case K::kSuffixB:
      for (std::size_t i = 0; i < no; ++i) f(i, i, i % nb);
      return;
    case K::kSuffixA:
      for (std::size_t i = 0; i < no; ++i) f(i, i % na, i);
      return;
    case K::kGeneral: {
      const std::size_t nd = p.out.size();
      std::vector<std::size_t> idx(nd, 0);
      std::size_t ia = 0, ib = 0;
      for (std::size_t i = 0; i < no; ++i) {
        f(i, ia, ib);
        for (std::size_t d = nd; d-- > 0;) {
          ++idx[d];
          ia += p.stride_a[d];
          ib += p.stride_b[d];
          if (idx[d] < p.out[d]) break;
          ia -= p.stride_a[d] * idx[d];
          ib -= p.stride_b[d] * idx[d];
          idx[d] = 0;
        }
      }
      return;
    }
  }
}

enum class BinOp { kAdd, kSub, kMul, kDiv };

Var binary(Var a, Var b, BinOp op) {
  Tape& t = a.tape();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  BroadcastPlan plan = plan_broadcast(av.shape(), bv.shape());
  Tensor out(plan.out);
  const double* pa = av.data();
  const double* pb = bv.data();
  double* po = out.data();
  switch (op) {
    case BinOp::kAdd:
      broadcast_each(plan, av.size(), bv.size(), [&](std::size_t i, std::size_t ia, std::size_t ib) { po[i] = pa[ia] + pb[ib]; });
      break;
    case BinOp::kSub:
      broadcast_each(plan, av.size(), bv.size(), [&](std::size_t i, std::size_t ia, std::size_t ib) { po[i] = pa[ia] - pb[ib]; });
      break;
    case BinOp::kMul:
      broadcast_each(plan, av.size(), bv.size(), [&](std::size_t i, std::size_t ia, std::size_t ib) { po[i] = pa[ia] * pb[ib]; });
      break;
    case BinOp::kDiv:
      broadcast_each(plan, av.size(), bv.size(), [&](std::size_t i, std::size_t ia, std::size_t ib) { po[i] = pa[ia] / pb[ib]; });
      break;
  }
  return t.record(std::move(out), {a, b}, [a, b, op, plan = std::move(plan)](Tape& tp, const Tensor& g, const Tensor&) {
    double* ga = tp.grad_buffer(a);
    double* gb = tp.grad_buffer(b);
    const double* pa = a.value().data();
    const double* pb = b.value().data();
    const double* pg = g.data();
    const std::size_t na = a.value().size(), nb = b.value().size();
    switch (op) {
      case BinOp::kAdd:
        broadcast_each(plan, na, nb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
          if (ga) ga[ia] += pg[i];
          if (gb) gb[ib] += pg[i];
        });
        break;
      case BinOp::kSub:
        broadcast_each(plan, na, nb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
          if (ga) ga[ia] += pg[i];
          if (gb) gb[ib] -= pg[i];
        });
        break;
      case BinOp::kMul:
        broadcast_each(plan, na, nb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
          if (ga) ga[ia] += pg[i] * pb[ib];
          if (gb) gb[ib] += pg[i] * pa[ia];
        });
        break;
      case BinOp::kDiv:
        broadcast_each(plan, na, nb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
          const double inv = 1.0 / pb[ib];
          if (ga) ga[ia] += pg[i] * inv;
          if (gb) gb[ib] -= pg[i] * pa[ia] * inv * inv;
        });
        break;
    }
  });
}

// Elementwise unary op. deriv(x, y) returns dy/dx.
template <typename Fwd, typename Deriv>
Var unary(Var x, Fwd fwd, Deriv deriv) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  return x.tape().record(std::move(out), {x}, [x, deriv](Tape& t, const Tensor& g, const Tensor& y) {
    double* gx = t.grad_buffer(x);
    const Tensor& xv = x.value();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(xv[i], y[i]);
  });
}

}  // namespace

Var add(Var a, Var b) { return binary(a, b, BinOp::kAdd); }
Var sub(Var a, Var b) { return binary(a, b, BinOp::kSub); }
Var mul(Var a, Var b) { return binary(a, b, BinOp::kMul); }
Var div(Var a, Var b) { return binary(a, b, BinOp::kDiv); }

Var operator+(Var a, double s) { return add(a, a.tape().constant(s)); }
Var operator-(Var a, double s) { return sub(a, a.tape().constant(s)); }
Var operator*(Var a, double s) { return mul(a, a.tape().constant(s)); }
Var operator/(Var a, double s) { return mul(a, a.tape().constant(1.0 / s)); }
Var operator+(double s, Var a) { return add(a.tape().constant(s), a); }
Var operator-(double s, Var a) { return sub(a.tape().constant(s), a); }
Var operator*(double s, Var a) { return mul(a.tape().constant(s), a); }
Var operator/(double s, Var a) { return div(a.tape().constant(s), a); }

Var neg(Var x) {
  return unary(x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Var pow(Var x, double e) {
  return unary(x, [e](double v) { return std::pow(v, e); }, [e](double v, double) { return e * std::pow(v, e - 1.0); });
}

Var square(Var x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var sqrt(Var x) {
  return unary(x, [](double v) { return std::sqrt(v); }, [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Var exp(Var x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var cosh(Var x) {
  return unary(x, [](double v) { return std::cosh(v); }, [](double v, double) { return std::sinh(v); });
}

Var sinh(Var x) {
  return unary(x, [](double v) { return std::sinh(v); }, [](double v, double) { return std::cosh(v); });
}

Var acosh(Var x, double floor) {
  return unary(
      x, [floor](double v) { return std::acosh(std::max(v, floor)); },
      [floor](double v, double) { return v > floor ? 1.0 / std::sqrt(v * v - 1.0) : 0.0; });
}

Var asinh(Var x) {
  return unary(x, [](double v) { return std::asinh(v); }, [](double v, double) { return 1.0 / std::sqrt(v * v + 1.0); });
}

Var elu(Var x, double alpha) {
  return unary(
      x, [alpha](double v) { return v > 0.0 ? v : alpha * std::expm1(v); },
      [alpha](double v, double) { return v > 0.0 ? 1.0 : alpha * std::exp(v); });
}

Var sigmoid(Var x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var clamp(Var x, double lo, double hi) {
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Linear algebra and layout

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (bv.ndim() != 2 || av.ndim() < 1 || av.shape().back() != bv.shape()[0]) {
    throw DimensionError("matmul " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  }
  const auto k = static_cast<Eigen::Index>(bv.shape()[0]);
  const auto m = static_cast<Eigen::Index>(bv.shape()[1]);
  const auto rows = static_cast<Eigen::Index>(av.size()) / k;
  Shape out_shape = av.shape();
  out_shape.back() = static_cast<std::size_t>(m);
  Tensor out(out_shape);
  MapMat(out.data(), rows, m).noalias() = CMapMat(av.data(), rows, k) * CMapMat(bv.data(), k, m);
  return a.tape().record(std::move(out), {a, b}, [a, b, rows, k, m](Tape& t, const Tensor& g, const Tensor&) {
    CMapMat gm(g.data(), rows, m);
    if (double* ga = t.grad_buffer(a)) {
      MapMat(ga, rows, k).noalias() += gm * CMapMat(b.value().data(), k, m).transpose();
    }
    if (double* gb = t.grad_buffer(b)) {
      MapMat(gb, k, m).noalias() += CMapMat(a.value().data(), rows, k).transpose() * gm;
    }
  });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x}, [x](Tape& t, const Tensor& g, const Tensor&) {
    double* gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var permute(Var x, std::vector<std::size_t> axes) {
  const Tensor& xv = x.value();
  const std::size_t nd = xv.ndim();
  if (axes.size() != nd) throw DimensionError("permute: axis count mismatch");
  std::vector<bool> seen(nd, false);
  for (auto a : axes) {
    if (a >= nd || seen[a]) throw DimensionError("permute: invalid axes");
    seen[a] = true;
  }
  Shape out_shape(nd);
  std::vector<std::size_t> in_stride(nd), src_stride(nd);
  std::size_t acc = 1;
  for (std::size_t i = nd; i-- > 0;) {
    in_stride[i] = acc;
    acc *= xv.shape()[i];
  }
  for (std::size_t i = 0; i < nd; ++i) {
    out_shape[i] = xv.shape()[axes[i]];
    src_stride[i] = in_stride[axes[i]];
  }
  // out flat index i -> source flat index
  std::vector<std::size_t> src(xv.size());
  {
    std::vector<std::size_t> idx(nd, 0);
    std::size_t s = 0;
    for (std::size_t i = 0; i < src.size(); ++i) {
      src[i] = s;
      for (std::size_t d = nd; d-- > 0;) {
        ++idx[d];
        s += src_stride[d];
        if (idx[d] < out_shape[d]) break;
        s -= src_stride[d] * idx[d];
        idx[d] = 0;
      }
    }
  }
  return take(x, std::move(src), std::move(out_shape));
}

Var transpose(Var x) {
  if (x.value().ndim() != 2) throw DimensionError("transpose expects a 2-D tensor");
  return permute(x, {1, 0});
}

Var slice(Var x, int axis, std::size_t start, std::size_t length) {
  const Tensor& xv = x.value();
  const std::size_t ax = normalize_axis(axis, xv.ndim());
  const std::size_t dim = xv.shape()[ax];
  if (start + length > dim) {
    throw DimensionError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") exceeds axis of size " + std::to_string(dim));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= xv.shape()[i];
  for (std::size_t i = ax + 1; i < xv.ndim(); ++i) inner *= xv.shape()[i];
  Shape out_shape = xv.shape();
  out_shape[ax] = length;
  Tensor out(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xv.data() + (o * dim + start) * inner, length * inner, out.data() + o * length * inner);
  }
  return x.tape().record(std::move(out), {x}, [x, outer, inner, dim, start, length](Tape& t, const Tensor& g, const Tensor&) {
    double* gx = t.grad_buffer(x);
    for (std::size_t o = 0; o < outer; ++o) {
      double* dst = gx + (o * dim + start) * inner;
      const double* srcp = g.data() + o * length * inner;
      for (std::size_t i = 0; i < length * inner; ++i) dst[i] += srcp[i];
    }
  });
}

Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  const std::size_t ax = normalize_axis(axis, first.size());
  std::size_t total = 0;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != ax && s[i] != first[i]) throw DimensionError("concat: shape mismatch " + shape_str(s) + " vs " + shape_str(first));
    }
    total += s[ax];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= first[i];
  for (std::size_t i = ax + 1; i < first.size(); ++i) inner *= first[i];
  Shape out_shape = first;
  out_shape[ax] = total;
  Tensor out(out_shape);
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const std::size_t w = p.shape()[ax];
    widths.push_back(w);
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p.value().data() + o * w * inner, w * inner, out.data() + (o * total + offset) * inner);
    }
    offset += w;
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  return parents.front().tape().record(
      std::move(out), parents, [parents, widths, outer, inner, total](Tape& t, const Tensor& g, const Tensor&) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < parents.size(); ++k) {
          const std::size_t w = widths[k];
          if (double* gp = t.grad_buffer(parents[k])) {
            for (std::size_t o = 0; o < outer; ++o) {
              const double* src = g.data() + (o * total + off) * inner;
              double* dst = gp + o * w * inner;
              for (std::size_t i = 0; i < w * inner; ++i) dst[i] += src[i];
            }
          }
          off += w;
        }
      });
}

Var take(Var x, std::vector<std::size_t> index, Shape out_shape) {
  if (numel(out_shape) != index.size()) throw DimensionError("take: index count does not match output shape");
  const Tensor& xv = x.value();
  Tensor out(std::move(out_shape));
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= xv.size()) throw DimensionError("take: index out of range");
    out[i] = xv[index[i]];
  }
  return x.tape().record(std::move(out), {x}, [x, index = std::move(index)](Tape& t, const Tensor& g, const Tensor&) {
    double* gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < index.size(); ++i) gx[index[i]] += g[i];
  });
}

Var take_rows(Var x, std::span<const std::size_t> rows) {
  const Shape& s = x.shape();
  if (s.empty()) throw DimensionError("take_rows on a scalar");
  const std::size_t row = numel(s) / s[0];
  std::vector<std::size_t> idx;
  idx.reserve(rows.size() * row);
  for (auto r : rows) {
    if (r >= s[0]) throw DimensionError("take_rows: row out of range");
    for (std::size_t j = 0; j < row; ++j) idx.push_back(r * row + j);
  }
  Shape out_shape = s;
  out_shape[0] = rows.size();
  return take(x, std::move(idx), std::move(out_shape));
}

// ---------------------------------------------------------------------------
// Reductions

Var sum(Var x) {
  const Tensor& xv = x.value();
  const double total = std::accumulate(xv.values().begin(), xv.values().end(), 0.0);
  return x.tape().record(Tensor::scalar(total), {x}, [x](Tape& t, const Tensor& g, const Tensor&) {
    double* gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < x.value().size(); ++i) gx[i] += g[0];
  });
}

Var sum(Var x, int axis, bool keepdim) {
  const Tensor& xv = x.value();
  const std::size_t ax = normalize_axis(axis, xv.ndim());
  const std::size_t dim = xv.shape()[ax];
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= xv.shape()[i];
  for (std::size_t i = ax + 1; i < xv.ndim(); ++i) inner *= xv.shape()[i];
  Shape out_shape = xv.shape();
  if (keepdim) {
    out_shape[ax] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
  }
  Tensor out(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t d = 0; d < dim; ++d) {
      const double* src = xv.data() + (o * dim + d) * inner;
      double* dst = out.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  return x.tape().record(std::move(out), {x}, [x, outer, inner, dim](Tape& t, const Tensor& g, const Tensor&) {
    double* gx = t.grad_buffer(x);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t d = 0; d < dim; ++d) {
        double* dst = gx + (o * dim + d) * inner;
        const double* src = g.data() + o * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
      }
    }
  });
}

Var mean(Var x) { return sum(x) * (1.0 / static_cast<double>(x.value().size())); }

Var mean(Var x, int axis, bool keepdim) {
  const double n = static_cast<double>(x.value().dim(axis));
  return sum(x, axis, keepdim) * (1.0 / n);
}

Var norm(Var x, int axis, bool keepdim) {
  const Tensor& xv = x.value();
  const std::size_t ax = normalize_axis(axis, xv.ndim());
  const std::size_t dim = xv.shape()[ax];
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= xv.shape()[i];
  for (std::size_t i = ax + 1; i < xv.ndim(); ++i) inner *= xv.shape()[i];
  Shape out_shape = xv.shape();
  if (keepdim) {
    out_shape[ax] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
  }
  Tensor out(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      double acc = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double v = xv[(o * dim + d) * inner + i];
        acc += v * v;
      }
      out[o * inner + i] = std::sqrt(acc);
    }
  }
  return x.tape().record(std::move(out), {x}, [x, outer, inner, dim](Tape& t, const Tensor& g, const Tensor& y) {
    double* gx = t.grad_buffer(x);
    const Tensor& xv = x.value();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        const double n = y[o * inner + i];
        if (n == 0.0) continue;
        const double s = g[o * inner + i] / n;
        for (std::size_t d = 0; d < dim; ++d) {
          const std::size_t k = (o * dim + d) * inner + i;
          gx[k] += s * xv[k];
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Convolution and pooling

Conv2dSpec Conv2dSpec::same(std::size_t kh, std::size_t kw, std::size_t groups) {
  Conv2dSpec s;
  s.pad_top = (kh - 1) / 2;
  s.pad_bottom = kh - 1 - s.pad_top;
  s.pad_left = (kw - 1) / 2;
  s.pad_right = kw - 1 - s.pad_left;
  s.groups = groups;
  return s;
}

namespace {

struct ConvGeometry {
  std::size_t batch, cin, h, w, cout, kh, kw, ho, wo, cin_g, cout_g;
};

// col: [cin_g * kh * kw, ho * wo] for one sample and group.
void im2col(const double* x, const ConvGeometry& g, const Conv2dSpec& s, std::size_t group, double* col) {
  const std::size_t hw_out = g.ho * g.wo;
  for (std::size_t c = 0; c < g.cin_g; ++c) {
    const double* xc = x + (group * g.cin_g + c) * g.h * g.w;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* row = col + ((c * g.kh + ki) * g.kw + kj) * hw_out;
        for (std::size_t oi = 0; oi < g.ho; ++oi) {
          const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi * s.stride_h + ki) - static_cast<std::ptrdiff_t>(s.pad_top);
          double* dst = row + oi * g.wo;
          if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill_n(dst, g.wo, 0.0);
            continue;
          }
          const double* src = xc + static_cast<std::size_t>(ii) * g.w;
          for (std::size_t oj = 0; oj < g.wo; ++oj) {
            const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(oj * s.stride_w + kj) - static_cast<std::ptrdiff_t>(s.pad_left);
            dst[oj] = (jj < 0 || jj >= static_cast<std::ptrdiff_t>(g.w)) ? 0.0 : src[jj];
          }
        }
      }
    }
  }
}

void col2im(const double* col, const ConvGeometry& g, const Conv2dSpec& s, std::size_t group, double* gx) {
  const std::size_t hw_out = g.ho * g.wo;
  for (std::size_t c = 0; c < g.cin_g; ++c) {
    double* xc = gx + (group * g.cin_g + c) * g.h * g.w;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* row = col + ((c * g.kh + ki) * g.kw + kj) * hw_out;
        for (std::size_t oi = 0; oi < g.ho; ++oi) {
          const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi * s.stride_h + ki) - static_cast<std::ptrdiff_t>(s.pad_top);
          if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(g.h)) continue;
          double* dst = xc + static_cast<std::size_t>(ii) * g.w;
          const double* src = row + oi * g.wo;
          for (std::size_t oj = 0; oj < g.wo; ++oj) {
            const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(oj * s.stride_w + kj) - static_cast<std::ptrdiff_t>(s.pad_left);
            if (jj >= 0 && jj < static_cast<std::ptrdiff_t>(g.w)) dst[jj] += src[oj];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(Var x, Var w, const Conv2dSpec& spec) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.ndim() != 4 || wv.ndim() != 4) throw DimensionError("conv2d expects 4-D input and kernel");
  if (spec.groups == 0 || spec.stride_h == 0 || spec.stride_w == 0) throw DimensionError("conv2d: zero stride or groups");
  ConvGeometry g{};
  g.batch = xv.shape()[0];
  g.cin = xv.shape()[1];
  g.h = xv.shape()[2];
  g.w = xv.shape()[3];
  g.cout = wv.shape()[0];
  g.kh = wv.shape()[2];
  g.kw = wv.shape()[3];
  if (g.cin % spec.groups != 0 || g.cout % spec.groups != 0 || wv.shape()[1] != g.cin / spec.groups) {
    throw DimensionError("conv2d: channels " + std::to_string(g.cin) + "->" + std::to_string(g.cout) +
                         " incompatible with groups " + std::to_string(spec.groups) + " and kernel " +
                         shape_str(wv.shape()));
  }
  const std::size_t hp = g.h + spec.pad_top + spec.pad_bottom;
  const std::size_t wp = g.w + spec.pad_left + spec.pad_right;
  if (hp < g.kh || wp < g.kw) throw DimensionError("conv2d: kernel larger than padded input");
  g.ho = (hp - g.kh) / spec.stride_h + 1;
  g.wo = (wp - g.kw) / spec.stride_w + 1;
  g.cin_g = g.cin / spec.groups;
  g.cout_g = g.cout / spec.groups;

  const auto kdim = static_cast<Eigen::Index>(g.cin_g * g.kh * g.kw);
  const auto hw = static_cast<Eigen::Index>(g.ho * g.wo);
  const auto cout_g = static_cast<Eigen::Index>(g.cout_g);
  Tensor out(Shape{g.batch, g.cout, g.ho, g.wo});
  std::vector<double> col(static_cast<std::size_t>(kdim * hw));
  for (std::size_t b = 0; b < g.batch; ++b) {
    const double* xb = xv.data() + b * g.cin * g.h * g.w;
    for (std::size_t grp = 0; grp < spec.groups; ++grp) {
      im2col(xb, g, spec, grp, col.data());
      double* ob = out.data() + (b * g.cout + grp * g.cout_g) * g.ho * g.wo;
      MapMat(ob, cout_g, hw).noalias() =
          CMapMat(wv.data() + grp * g.cout_g * static_cast<std::size_t>(kdim), cout_g, kdim) * CMapMat(col.data(), kdim, hw);
    }
  }
  return x.tape().record(std::move(out), {x, w}, [x, w, g, spec, kdim, hw, cout_g](Tape& t, const Tensor& go, const Tensor&) {
    double* gx = t.grad_buffer(x);
    double* gw = t.grad_buffer(w);
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    std::vector<double> col(static_cast<std::size_t>(kdim * hw));
    std::vector<double> gcol(gx ? col.size() : 0);
    for (std::size_t b = 0; b < g.batch; ++b) {
      const double* xb = xv.data() + b * g.cin * g.h * g.w;
      for (std::size_t grp = 0; grp < spec.groups; ++grp) {
        CMapMat gob(go.data() + (b * g.cout + grp * g.cout_g) * g.ho * g.wo, cout_g, hw);
        const std::size_t woff = grp * g.cout_g * static_cast<std::size_t>(kdim);
        if (gw) {
          im2col(xb, g, spec, grp, col.data());
          MapMat(gw + woff, cout_g, kdim).noalias() += gob * CMapMat(col.data(), kdim, hw).transpose();
        }
        if (gx) {
          MapMat(gcol.data(), kdim, hw).noalias() = CMapMat(wv.data() + woff, cout_g, kdim).transpose() * gob;
          col2im(gcol.data(), g, spec, grp, gx + b * g.cin * g.h * g.w);
        }
      }
    }
  });
}

Var avg_pool2d(Var x, std::size_t kh, std::size_t kw, std::size_t sh, std::size_t sw) {
  const Tensor& xv = x.value();
  if (xv.ndim() != 4) throw DimensionError("avg_pool2d expects [B, C, H, W]");
  const std::size_t bc = xv.shape()[0] * xv.shape()[1];
  const std::size_t h = xv.shape()[2], w = xv.shape()[3];
  if (kh == 0 || kw == 0 || sh == 0 || sw == 0 || kh > h || kw > w) throw DimensionError("avg_pool2d: invalid window");
  const std::size_t ho = (h - kh) / sh + 1, wo = (w - kw) / sw + 1;
  const double scale = 1.0 / static_cast<double>(kh * kw);
  Tensor out(Shape{xv.shape()[0], xv.shape()[1], ho, wo});
  for (std::size_t c = 0; c < bc; ++c) {
    const double* xc = xv.data() + c * h * w;
    double* oc = out.data() + c * ho * wo;
    for (std::size_t i = 0; i < ho; ++i) {
      for (std::size_t j = 0; j < wo; ++j) {
        double acc = 0.0;
        for (std::size_t a = 0; a < kh; ++a) {
          for (std::size_t b = 0; b < kw; ++b) acc += xc[(i * sh + a) * w + j * sw + b];
        }
        oc[i * wo + j] = acc * scale;
      }
    }
  }
  return x.tape().record(std::move(out), {x}, [x, bc, h, w, ho, wo, kh, kw, sh, sw, scale](Tape& t, const Tensor& g, const Tensor&) {
    double* gx = t.grad_buffer(x);
    for (std::size_t c = 0; c < bc; ++c) {
      double* xc = gx + c * h * w;
      const double* gc = g.data() + c * ho * wo;
      for (std::size_t i = 0; i < ho; ++i) {
        for (std::size_t j = 0; j < wo; ++j) {
          const double v = gc[i * wo + j] * scale;
          for (std::size_t a = 0; a < kh; ++a) {
            for (std::size_t b = 0; b < kw; ++b) xc[(i * sh + a) * w + j * sw + b] += v;
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Batch normalization

namespace {

void check_bn(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  if (x.ndim() != 4) throw DimensionError("batch norm expects [B, C, H, W]");
  const std::size_t c = x.shape()[1];
  if (gamma.size() != c || beta.size() != c) throw DimensionError("batch norm affine terms must have C entries");
}

}  // namespace

Var batch_norm_train(Var x, Var gamma, Var beta, double eps, std::vector<double>* batch_mean,
                     std::vector<double>* batch_var) {
  const Tensor& xv = x.value();
  check_bn(xv, gamma.value(), beta.value());
  const std::size_t nb = xv.shape()[0], nc = xv.shape()[1], hw = xv.shape()[2] * xv.shape()[3];
  const double count = static_cast<double>(nb * hw);
  std::vector<double> mu(nc, 0.0), var(nc, 0.0);
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t c = 0; c < nc; ++c) {
      const double* p = xv.data() + (b * nc + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) mu[c] += p[i];
    }
  }
  for (auto& m : mu) m /= count;
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t c = 0; c < nc; ++c) {
      const double* p = xv.data() + (b * nc + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) var[c] += (p[i] - mu[c]) * (p[i] - mu[c]);
    }
  }
  for (auto& v : var) v /= count;
  std::vector<double> inv_std(nc);
  for (std::size_t c = 0; c < nc; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);

  Tensor xhat(xv.shape());
  Tensor out(xv.shape());
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t c = 0; c < nc; ++c) {
      const std::size_t off = (b * nc + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const double h = (xv[off + i] - mu[c]) * inv_std[c];
        xhat[off + i] = h;
        out[off + i] = gv[c] * h + bv[c];
      }
    }
  }
  if (batch_mean) *batch_mean = mu;
  if (batch_var) *batch_var = var;
  return x.tape().record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std, nb, nc, hw, count](Tape& t, const Tensor& g, const Tensor&) {
        double* gx = t.grad_buffer(x);
        double* gg = t.grad_buffer(gamma);
        double* gb = t.grad_buffer(beta);
        const Tensor& gv = gamma.value();
        std::vector<double> sum_g(nc, 0.0), sum_gx(nc, 0.0);
        for (std::size_t b = 0; b < nb; ++b) {
          for (std::size_t c = 0; c < nc; ++c) {
            const std::size_t off = (b * nc + c) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              sum_g[c] += g[off + i];
              sum_gx[c] += g[off + i] * xhat[off + i];
            }
          }
        }
        for (std::size_t c = 0; c < nc; ++c) {
          if (gg) gg[c] += sum_gx[c];
          if (gb) gb[c] += sum_g[c];
        }
        if (!gx) return;
        for (std::size_t b = 0; b < nb; ++b) {
          for (std::size_t c = 0; c < nc; ++c) {
            const std::size_t off = (b * nc + c) * hw;
            const double k = gv[c] * inv_std[c];
            const double mg = sum_g[c] / count, mgx = sum_gx[c] / count;
            for (std::size_t i = 0; i < hw; ++i) gx[off + i] += k * (g[off + i] - mg - xhat[off + i] * mgx);
          }
        }
      });
}

Var batch_norm_eval(Var x, Var gamma, Var beta, std::span<const double> mean_in, std::span<const double> var_in,
                    double eps) {
  const Tensor& xv = x.value();
  check_bn(xv, gamma.value(), beta.value());
  const std::size_t nb = xv.shape()[0], nc = xv.shape()[1], hw = xv.shape()[2] * xv.shape()[3];
  if (mean_in.size() != nc || var_in.size() != nc) throw DimensionError("batch norm statistics must have C entries");
  std::vector<double> mu(mean_in.begin(), mean_in.end());
  std::vector<double> inv_std(nc);
  for (std::size_t c = 0; c < nc; ++c) inv_std[c] = 1.0 / std::sqrt(var_in[c] + eps);
  Tensor out(xv.shape());
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t c = 0; c < nc; ++c) {
      const std::size_t off = (b * nc + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) out[off + i] = gv[c] * (xv[off + i] - mu[c]) * inv_std[c] + bv[c];
    }
  }
  return x.tape().record(std::move(out), {x, gamma, beta}, [x, gamma, beta, mu, inv_std, nb, nc, hw](Tape& t, const Tensor& g, const Tensor&) {
    double* gx = t.grad_buffer(x);
    double* gg = t.grad_buffer(gamma);
    double* gb = t.grad_buffer(beta);
    const Tensor& xv = x.value();
    const Tensor& gv = gamma.value();
    for (std::size_t b = 0; b < nb; ++b) {
      for (std::size_t c = 0; c < nc; ++c) {
        const std::size_t off = (b * nc + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const double h = (xv[off + i] - mu[c]) * inv_std[c];
          if (gx) gx[off + i] += g[off + i] * gv[c] * inv_std[c];
          if (gg) gg[c] += g[off + i] * h;
          if (gb) gb[c] += g[off + i];
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Dropout, losses

Var apply_mask(Var x, const Tensor& mask) {
  if (mask.shape() != x.shape()) throw DimensionError("dropout mask shape mismatch");
  return mul(x, x.tape().constant(mask));
}

Var dropout(Var x, double p, Rng& rng, bool training) {
  if (!training || p <= 0.0) return x;
  if (p >= 1.0) throw ValidationError("dropout probability must be < 1");
  Tensor mask(x.shape());
  const double keep = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.uniform() >= p ? keep : 0.0;
  return apply_mask(x, mask);
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  if (z.ndim() != 2) throw DimensionError("softmax_cross_entropy expects [B, C] logits");
  const std::size_t nb = z.shape()[0], nc = z.shape()[1];
  if (labels.size() != nb) throw DimensionError("softmax_cross_entropy: label count mismatch");
  Tensor prob(z.shape());
  double loss = 0.0;
  std::vector<int> lab(labels.begin(), labels.end());
  for (std::size_t b = 0; b < nb; ++b) {
    if (lab[b] < 0 || static_cast<std::size_t>(lab[b]) >= nc) throw ValidationError("label out of range");
    const double* row = z.data() + b * nc;
    const double mx = *std::max_element(row, row + nc);
    double se = 0.0;
    for (std::size_t c = 0; c < nc; ++c) se += std::exp(row[c] - mx);
    const double lse = mx + std::log(se);
    for (std::size_t c = 0; c < nc; ++c) prob[b * nc + c] = std::exp(row[c] - lse);
    loss += lse - row[lab[b]];
  }
  loss /= static_cast<double>(nb);
  return logits.tape().record(Tensor::scalar(loss), {logits}, [logits, prob = std::move(prob), lab, nb, nc](Tape& t, const Tensor& g, const Tensor&) {
    double* gz = t.grad_buffer(logits);
    const double s = g[0] / static_cast<double>(nb);
    for (std::size_t b = 0; b < nb; ++b) {
      for (std::size_t c = 0; c < nc; ++c) {
        const double target = static_cast<int>(c) == lab[b] ? 1.0 : 0.0;
        gz[b * nc + c] += s * (prob[b * nc + c] - target);
      }
    }
  });
}

Var sliced_wasserstein_pp(Var proj, const Tensor& reference, double p) {
  const Tensor& a = proj.value();
  if (a.ndim() != 2 || reference.shape() != a.shape()) {
    throw DimensionError("sliced_wasserstein_pp: projections " + shape_str(a.shape()) + " vs reference " +
                         shape_str(reference.shape()));
  }
  if (!(p >= 1.0)) throw ValidationError("Wasserstein exponent must be >= 1");
  const std::size_t m = a.shape()[0], s = a.shape()[1];
  const bool square = p == 2.0;
  // Column-major copies so each slice sorts a contiguous run. Ties break by row index.
  std::vector<std::pair<double, std::size_t>> col(m * s);
  std::vector<double> ref(m * s);
  for (std::size_t r = 0; r < m; ++r) {
    const double* ar = a.data() + r * s;
    const double* br = reference.data() + r * s;
    for (std::size_t c = 0; c < s; ++c) {
      col[c * m + r] = {ar[c], r};
      ref[c * m + r] = br[c];
    }
  }
  // residual[c * m + rank] = a_(rank) - b_(rank); order[c * m + rank] = source row
  std::vector<double> residual(m * s);
  std::vector<std::uint32_t> order(m * s);
  double total = 0.0;
  for (std::size_t c = 0; c < s; ++c) {
    auto* cb = col.data() + c * m;
    double* rb = ref.data() + c * m;
    std::sort(cb, cb + m);
    std::sort(rb, rb + m);
    double acc = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      const double d = cb[r].first - rb[r];
      residual[c * m + r] = d;
      order[c * m + r] = static_cast<std::uint32_t>(cb[r].second);
      acc += square ? d * d : std::pow(std::abs(d), p);
    }
    total += acc;
  }
  total /= static_cast<double>(m * s);
  return proj.tape().record(
      Tensor::scalar(total), {proj},
      [proj, order = std::move(order), residual = std::move(residual), m, s, p, square](Tape& t, const Tensor& g,
                                                                                       const Tensor&) {
        double* gp = t.grad_buffer(proj);
        const double scale = g[0] / static_cast<double>(m * s);
        for (std::size_t c = 0; c < s; ++c) {
          for (std::size_t r = 0; r < m; ++r) {
            const double d = residual[c * m + r];
            if (d == 0.0) continue;
            const double dv = square ? 2.0 * d : p * std::pow(std::abs(d), p - 1.0) * (d > 0.0 ? 1.0 : -1.0);
            gp[order[c * m + r] * s + c] += scale * dv;
          }
        }
      });
}

}  // namespace lorentzkit::ad
