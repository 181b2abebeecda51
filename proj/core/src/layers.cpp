#include "lorentzkit/layers.hpp"

#include <Eigen/Core>
#include <cmath>
#include <memory>

#include "lorentzkit/error.hpp"
#include "lorentzkit/frechet.hpp"

namespace lorentzkit::nn {

namespace {

std::size_t last_dim(const Var& x) {
  if (x.shape().empty()) throw DimensionError("expected a tensor with an ambient axis, got a scalar");
  return x.shape().back();
}

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.storage()) v = rng.uniform(-bound, bound);
  return t;
}

// [-1, 1, ..., 1] so that sum(a * b * sign) is the Lorentz inner product.
Tensor lorentz_sign(std::size_t dim) {
  Tensor s(Shape{dim}, 1.0);
  s[0] = -1.0;
  return s;
}

}  // namespace

Var time_part(Var p) { return ad::slice(p, -1, 0, 1); }

Var space_part(Var p) {
  const std::size_t d = last_dim(p);
  if (d < 2) throw DimensionError("Lorentz tensor needs ambient dimension >= 2");
  return ad::slice(p, -1, 1, d - 1);
}

Var lorentz_inner(Var a, Var b) {
  const std::size_t d = last_dim(a);
  if (last_dim(b) != d) throw DimensionError("lorentz_inner: ambient dimensions differ");
  Var sign = a.tape().constant(lorentz_sign(d));
  return ad::sum(a * b * sign, -1, true);
}

Var lift(Var space, Curvature k) {
  const Tensor& s = space.value();
  const std::size_t n = last_dim(space);
  const std::size_t rows = s.size() / n;
  const double inv = -1.0 / k.k();
  Shape out_shape = s.shape();
  out_shape.back() = n + 1;
  Tensor out(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = s.data() + r * n;
    double* dst = out.data() + r * (n + 1);
    double sq = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      sq += src[j] * src[j];
      dst[j + 1] = src[j];
    }
    dst[0] = std::sqrt(sq + inv);
  }
  return space.tape().record(std::move(out), {space}, [space, n, rows](Tape& t, const Tensor& g, const Tensor& y) {
    double* gs = t.grad_buffer(space);
    const double* s = space.value().data();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* gr = g.data() + r * (n + 1);
      const double dt = gr[0] / y[r * (n + 1)];
      for (std::size_t j = 0; j < n; ++j) gs[r * n + j] += gr[j + 1] + dt * s[r * n + j];
    }
  });
}

Var clamp_norm(Var space, double max_norm) {
  if (!(max_norm > 0.0)) throw ValidationError("clamp_norm: max norm must be positive");
  const Tensor& s = space.value();
  const std::size_t n = last_dim(space);
  const std::size_t rows = s.size() / n;
  Tensor out = s;
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t j = 0; j < n; ++j) sq += s[r * n + j] * s[r * n + j];
    norms[r] = std::sqrt(sq);
    if (norms[r] > max_norm) {
      const double f = max_norm / norms[r];
      for (std::size_t j = 0; j < n; ++j) out[r * n + j] *= f;
    }
  }
  return space.tape().record(std::move(out), {space},
                             [space, n, rows, max_norm, norms = std::move(norms)](Tape& t, const Tensor& g, const Tensor&) {
                               double* gs = t.grad_buffer(space);
                               const double* s = space.value().data();
                               for (std::size_t r = 0; r < rows; ++r) {
                                 const double* gr = g.data() + r * n;
                                 if (norms[r] <= max_norm) {
                                   for (std::size_t j = 0; j < n; ++j) gs[r * n + j] += gr[j];
                                   continue;
                                 }
                                 // d(m s/|s|) = (m/|s|)(I - s s^T/|s|^2)
                                 double sg = 0.0;
                                 for (std::size_t j = 0; j < n; ++j) sg += s[r * n + j] * gr[j];
                                 const double f = max_norm / norms[r];
                                 const double c = sg / (norms[r] * norms[r]);
                                 for (std::size_t j = 0; j < n; ++j) gs[r * n + j] += f * (gr[j] - c * s[r * n + j]);
                               }
                             });
}

Var exp0(Var space, Curvature k) {
  const double rk = k.sqrt_neg();
  Var r = ad::sqrt(ad::sum(ad::square(space), -1, true) + 1e-300);
  Var factor = ad::sinh(r * rk) / (r * rk);
  return lift(factor * space, k);
}

Var geodesic_distance(Var p, Var q, Curvature k) {
  return ad::acosh(lorentz_inner(p, q) * k.k()) * (1.0 / k.sqrt_neg());
}

Var gyroinverse(Var p) { return ad::concat({time_part(p), -space_part(p)}, -1); }

Var gyroadd(Var p, Var q, Curvature k) {
  const double kk = k.k();
  const double rk = k.sqrt_neg();
  Var ps = space_part(p), qs = space_part(q);
  Var a = time_part(p) * rk + 1.0;
  Var b = time_part(q) * rk + 1.0;
  Var np = ad::sum(ad::square(ps), -1, true);
  Var nq = ad::sum(ad::square(qs), -1, true);
  Var s = ad::sum(ps * qs, -1, true);
  Var ab = a * b;
  Var d = ab * ab - 2.0 * kk * ab * s + (kk * kk) * np * nq;
  Var num = a * a * nq + 2.0 * ab * s + b * b * np;
  Var as = a * b * b - 2.0 * kk * b * s - kk * a * nq;
  Var aq = b * (a * a + kk * np);
  Var space = 2.0 * (as * ps + aq * qs) / (d + kk * num);
  return lift(space, k);
}

Var gyroscale(Var t, Var p, Curvature k) {
  const double rk = k.sqrt_neg();
  Var ps = space_part(p);
  Var r = ad::sqrt(ad::sum(ad::square(ps), -1, true) + 1e-300);
  Var theta = ad::asinh(r * rk);
  Var factor = ad::sinh(t * theta) / (r * rk);
  return lift(factor * ps, k);
}

Var lorentz_elu(Var p, Curvature k) { return lift(ad::elu(space_part(p)), k); }

Var hcat(Var p, Curvature k) {
  const Shape& s = p.shape();
  if (s.size() < 2) throw DimensionError("hcat needs [..., N, n+1], got " + shape_str(s));
  Var sp = space_part(p);
  Shape flat(s.begin(), s.end() - 2);
  flat.push_back(s[s.size() - 2] * (s.back() - 1));
  return lift(ad::reshape(sp, flat), k);
}

Var lorentz_centroid(Var points, Curvature k) {
  if (points.shape().size() < 2) throw DimensionError("lorentz_centroid needs [..., N, n+1]");
  Var c = ad::mean(points, -2, false);
  Var ct = time_part(c), cs = space_part(c);
  // -<c,c>_L > 0 for any nonnegative combination of sheet points
  Var neg_inner = ad::square(ct) - ad::sum(ad::square(cs), -1, true);
  return lift(cs / (ad::sqrt(neg_inner) * k.sqrt_neg()), k);
}

Var busemann(Var p, const Tensor& dirs, Curvature k) {
  if (p.shape().size() != 2) throw DimensionError("busemann expects [m, n+1] points");
  const std::size_t n = last_dim(p) - 1;
  if (dirs.ndim() != 2 || dirs.shape()[0] != n) {
    throw DimensionError("busemann: directions " + shape_str(dirs.shape()) + " do not match dimension " +
                         std::to_string(n));
  }
  const double rk = k.sqrt_neg();
  const std::size_t m = p.shape()[0], slices = dirs.shape()[1], d = n + 1;
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> pts(p.value().data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
  Eigen::Map<const RowMat> v(dirs.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(slices));
  // u = p_t - <p_s, v>, kept for the backward pass as 1 / (rk u)
  RowMat u = (-(pts.rightCols(static_cast<Eigen::Index>(n)) * v)).colwise() + pts.col(0);
  Tensor out(Shape{m, slices});
  auto inv = std::make_shared<RowMat>(m, slices);
  for (std::size_t i = 0; i < m * slices; ++i) {
    const double ui = u.data()[i];
    out[i] = std::log(rk * ui) / rk;
    inv->data()[i] = 1.0 / (rk * ui);
  }
  return p.tape().record(std::move(out), {p}, [p, dirs, inv, m, n, slices](Tape& t, const Tensor& g, const Tensor&) {
    double* gp = t.grad_buffer(p);
    if (!gp) return;
    Eigen::Map<const RowMat> gm(g.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(slices));
    Eigen::Map<const RowMat> v(dirs.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(slices));
    const RowMat w = gm.cwiseProduct(*inv);
    Eigen::Map<RowMat> gpm(gp, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n + 1));
    gpm.col(0) += w.rowwise().sum();
    gpm.rightCols(static_cast<Eigen::Index>(n)) -= w * v.transpose();
  });
}

// ---------------------------------------------------------------------------

Lfc::Lfc(std::string name, std::size_t in_dim, std::size_t out_dim, Rng& rng, LfcOptions options)
    : in_dim_(in_dim), out_dim_(out_dim), options_(options) {
  if (in_dim == 0 || out_dim == 0) throw ValidationError("Lfc dimensions must be positive");
  if (!(options.init_lambda > 0.0)) throw ValidationError("Lfc init_lambda must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim + 1));
  weight = Parameter(name + ".weight", uniform_tensor({in_dim + 1, out_dim}, bound, rng));
  bias = Parameter(name + ".bias", Tensor({out_dim}));
  log_lambda = Parameter(name + ".log_lambda", Tensor::vector({std::log(options.init_lambda)}));
  gate_v = Parameter(name + ".gate_v", uniform_tensor({in_dim + 1, 1}, 0.1 * bound, rng));
  gate_b = Parameter(name + ".gate_b", Tensor({1}));
}

std::vector<Parameter*> Lfc::parameters() {
  if (options_.gated) return {&weight, &bias, &log_lambda, &gate_v, &gate_b};
  return {&weight, &bias};
}

Var Lfc::forward(Tape& tape, Var p, Curvature k) {
  if (last_dim(p) != in_dim_ + 1) {
    throw DimensionError("Lfc expects ambient dimension " + std::to_string(in_dim_ + 1) + ", got " +
                         std::to_string(last_dim(p)));
  }
  Var x = options_.activation == LfcInputActivation::kElu ? ad::elu(p) : p;
  Var u = ad::matmul(x, tape.param(weight)) + tape.param(bias);
  if (!options_.gated) {
    return lift(options_.activation == LfcInputActivation::kElu ? ad::elu(u) : u, k);
  }
  Var gate = ad::sigmoid(ad::matmul(p, tape.param(gate_v)) + tape.param(gate_b));
  Var unorm = ad::sqrt(ad::sum(ad::square(u), -1, true) + 1e-24);
  Var lambda = ad::exp(tape.param(log_lambda));
  return lift(lambda * gate * u / unorm, k);
}

LorentzConv::LorentzConv(std::string name, std::size_t in_dim, std::size_t out_dim, std::size_t kh, std::size_t kw,
                         std::size_t stride, Rng& rng, LfcOptions options)
    : kh_(kh), kw_(kw), stride_(stride), lfc_(std::move(name), kh * kw * in_dim, out_dim, rng, options) {
  if (kh == 0 || kw == 0 || stride == 0) throw ValidationError("LorentzConv kernel and stride must be positive");
}

Var LorentzConv::forward(Tape& tape, Var fmap, Curvature k) {
  if (fmap.shape().size() != 4) throw DimensionError("LorentzConv expects [B, H, W, n+1], got " + shape_str(fmap.shape()));
  if (kh_ == 1 && kw_ == 1 && stride_ == 1) return lfc_.forward(tape, fmap, k);
  return lfc_.forward(tape, hcat(extract_windows(fmap, kh_, kw_, stride_, stride_), k), k);
}

Var extract_windows(Var fmap, std::size_t kh, std::size_t kw, std::size_t sh, std::size_t sw) {
  const Shape& s = fmap.shape();
  if (s.size() != 4) throw DimensionError("extract_windows expects [B, H, W, D], got " + shape_str(s));
  const std::size_t b = s[0], h = s[1], w = s[2], d = s[3];
  if (kh == 0 || kw == 0 || sh == 0 || sw == 0) throw ValidationError("window and stride must be positive");
  if (kh > h || kw > w) throw DimensionError("window larger than feature map " + shape_str(s));
  const std::size_t ho = (h - kh) / sh + 1, wo = (w - kw) / sw + 1;
  std::vector<std::size_t> idx;
  idx.reserve(b * ho * wo * kh * kw * d);
  for (std::size_t n = 0; n < b; ++n) {
    for (std::size_t i = 0; i < ho; ++i) {
      for (std::size_t j = 0; j < wo; ++j) {
        for (std::size_t u = 0; u < kh; ++u) {
          for (std::size_t v = 0; v < kw; ++v) {
            const std::size_t base = ((n * h + i * sh + u) * w + j * sw + v) * d;
            for (std::size_t c = 0; c < d; ++c) idx.push_back(base + c);
          }
        }
      }
    }
  }
  return ad::take(fmap, std::move(idx), Shape{b, ho, wo, kh * kw, d});
}

Var lorentz_avg_pool(Var fmap, std::size_t kh, std::size_t kw, std::size_t sh, std::size_t sw, Curvature k) {
  return lorentz_centroid(extract_windows(fmap, kh, kw, sh, sw), k);
}

Tensor frechet_avg_pool(const Tensor& fmap, std::size_t kh, std::size_t kw, std::size_t sh, std::size_t sw,
                        Curvature k) {
  Tape tape;
  const Tensor windows = extract_windows(tape.constant(fmap), kh, kw, sh, sw).value();
  const Shape& ws = windows.shape();
  const std::size_t sites = ws[0] * ws[1] * ws[2], count = ws[3], d = ws[4];
  Tensor out(Shape{ws[0], ws[1], ws[2], d});
  std::vector<LorentzPoint> pts;
  for (std::size_t site = 0; site < sites; ++site) {
    pts.clear();
    for (std::size_t m = 0; m < count; ++m) {
      Vec v = Eigen::Map<const Vec>(windows.data() + (site * count + m) * d, static_cast<Eigen::Index>(d));
      pts.emplace_back(std::move(v), k, 1e-6);
    }
    const LorentzPoint mean = frechet_mean(pts).mean;
    for (std::size_t c = 0; c < d; ++c) out[site * d + c] = mean.ambient()(static_cast<Eigen::Index>(c));
  }
  return out;
}

// ---------------------------------------------------------------------------

Hmlr::Hmlr(std::string name, std::size_t dim, std::size_t classes, Rng& rng) {
  if (dim == 0 || classes < 2) throw ValidationError("Hmlr needs dim >= 1 and at least two classes");
  a = Parameter(name + ".a", Tensor({classes}));
  z = Parameter(name + ".z", uniform_tensor({classes, dim}, 1.0 / std::sqrt(static_cast<double>(dim)), rng));
}

Var Hmlr::forward(Tape& tape, Var p, Curvature k) {
  if (p.shape().size() != 2 || last_dim(p) != z.value.shape()[1] + 1) {
    throw DimensionError("Hmlr expects [B, " + std::to_string(z.value.shape()[1] + 1) + "], got " +
                         shape_str(p.shape()));
  }
  const double rk = k.sqrt_neg();
  Var av = tape.param(a) * rk;
  Var zv = tape.param(z);
  // cosh^2 - sinh^2 = 1, so the hyperplane normal's Lorentz norm reduces to |z_c|
  Var beta = ad::sqrt(ad::sum(ad::square(zv), -1, false) + 1e-24);
  Var alpha = ad::cosh(av) * ad::matmul(space_part(p), ad::transpose(zv)) - ad::sinh(av) * beta * time_part(p);
  return beta * ad::asinh(alpha * rk / beta) * (1.0 / rk);
}

}  // namespace lorentzkit::nn
