#include "lorentzkit/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lorentzkit/gyro.hpp"
#include "lorentzkit/layers.hpp"

namespace lorentzkit {

double MomentumSchedule::eta_train(std::size_t k) const {
  return std::max(eta_min, eta0 * std::pow(decay_rate, static_cast<double>(k)));
}

void MomentumSchedule::validate() const {
  auto unit = [](double v) { return v > 0.0 && v <= 1.0; };
  if (!unit(eta0)) throw ValidationError("align.eta0 must lie in (0, 1]");
  if (!(decay_rate > 0.0 && decay_rate < 1.0)) throw ValidationError("align.decay_rate must lie in (0, 1)");
  if (!unit(eta_min)) throw ValidationError("align.eta_min must lie in (0, 1]");
  if (!unit(eta_test)) throw ValidationError("align.eta_test must lie in (0, 1]");
}

DomainStats DomainStats::initial(std::size_t dim, Curvature k) {
  const LorentzPoint o = LorentzPoint::origin(dim, k);
  return DomainStats{o, o, 1.0, 1.0, 0};
}

std::vector<LorentzPoint> rows_to_points(const Tensor& rows, Curvature k) {
  if (rows.ndim() != 2 || rows.shape()[1] < 2) throw DimensionError("expected [m, n+1] rows, got " + shape_str(rows.shape()));
  const std::size_t m = rows.shape()[0], d = rows.shape()[1];
  std::vector<LorentzPoint> pts;
  pts.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    pts.push_back(LorentzPoint::unchecked(Eigen::Map<const Vec>(rows.data() + i * d, static_cast<Eigen::Index>(d)), k));
  }
  return pts;
}

BatchStats batch_statistics(std::span<const LorentzPoint> points, FrechetOptions options) {
  try {
    FrechetResult r = frechet_mean(points, options);
    return {std::move(r.mean), r.variance};
  } catch (const ConvergenceError& e) {
    return {e.last_iterate().mean, e.last_iterate().variance};
  }
}

BatchStats batch_statistics(const Tensor& rows, Curvature k, FrechetOptions options) {
  const auto pts = rows_to_points(rows, k);
  return batch_statistics(pts, options);
}

std::vector<LorentzPoint> hbn_normalize(std::span<const LorentzPoint> batch, const LorentzPoint& mean, double var,
                                        double gamma, double eps) {
  if (!(var >= 0.0) || !(eps > 0.0)) throw ValidationError("hbn: variance must be >= 0 and eps > 0");
  const LorentzPoint inv = gyroinverse(mean);
  const double t = gamma / std::sqrt(var + eps);
  std::vector<LorentzPoint> out;
  out.reserve(batch.size());
  for (const auto& p : batch) out.push_back(gyromul(t, gyroadd(inv, p)));
  return out;
}

std::vector<LorentzPoint> hbn(std::span<const LorentzPoint> batch, double gamma, double eps) {
  if (batch.empty()) throw ValidationError("hbn of an empty batch");
  const BatchStats s = batch_statistics(batch);
  return hbn_normalize(batch, s.mean, s.var, gamma, eps);
}

ad::Var hbn_apply(ad::Var points, const LorentzPoint& mean, double var, ad::Var gamma, double eps, Curvature k) {
  const Vec inv = gyroinverse(mean).ambient();
  Tensor inv_t(Shape{static_cast<std::size_t>(inv.size())}, std::vector<double>(inv.data(), inv.data() + inv.size()));
  ad::Var centered = nn::gyroadd(points.tape().constant(std::move(inv_t)), points, k);
  return nn::gyroscale(gamma * (1.0 / std::sqrt(var + eps)), centered, k);
}

// ---------------------------------------------------------------------------

DomainBatchNorm::DomainBatchNorm(std::string name, std::size_t dim, Curvature k, MomentumSchedule schedule,
                                 double eps, bool domain_specific)
    : log_gamma(name + ".log_gamma", Tensor(Shape{1})),
      dim_(dim),
      k_(k),
      schedule_(schedule),
      eps_(eps),
      domain_specific_(domain_specific) {
  schedule_.validate();
  if (!(eps > 0.0)) throw ValidationError("align.epsilon must be positive");
}

ad::Var DomainBatchNorm::forward(ad::Tape& tape, ad::Var points, std::span<const int> row_domains, BnMode mode,
                                 bool* fallback) {
  const Shape& s = points.shape();
  if (s.size() != 2 || s[1] != dim_ + 1) {
    throw DimensionError("DomainBatchNorm expects [N, " + std::to_string(dim_ + 1) + "], got " + shape_str(s));
  }
  if (row_domains.size() != s[0]) throw DimensionError("DomainBatchNorm: one domain tag per row required");

  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < row_domains.size(); ++i) groups[key(row_domains[i])].push_back(i);

  ad::Var gamma = ad::exp(tape.param(log_gamma));
  std::vector<ad::Var> parts;
  std::vector<std::size_t> order;
  order.reserve(s[0]);
  const std::size_t d = dim_ + 1;
  for (const auto& [dom, idx] : groups) {
    LorentzPoint mean = LorentzPoint::origin(dim_, k_);
    double var = 1.0;
    if (mode == BnMode::kEval || frozen_) {
      auto it = stats_.find(dom);
      if (it == stats_.end()) {
        if (fallback) *fallback = true;
      } else if (mode == BnMode::kTrain) {
        mean = it->second.train_mean;
        var = it->second.train_var;
      } else {
        mean = it->second.test_mean;
        var = it->second.test_var;
      }
    } else {
      if (idx.size() < 2) {
        throw ValidationError("domain " + std::to_string(dom) + " contributes fewer than 2 samples to a batch");
      }
      Tensor rows(Shape{idx.size(), d});
      for (std::size_t r = 0; r < idx.size(); ++r) {
        std::copy_n(points.value().data() + idx[r] * d, d, rows.data() + r * d);
      }
      BatchStats used = update(dom, rows, mode);
      mean = std::move(used.mean);
      var = used.var;
    }
    ad::Var sub = groups.size() == 1 ? points : ad::take_rows(points, idx);
    parts.push_back(hbn_apply(sub, mean, var, gamma, eps_, k_));
    order.insert(order.end(), idx.begin(), idx.end());
  }
  if (parts.size() == 1) return parts.front();
  ad::Var joined = ad::concat(std::span<const ad::Var>(parts), 0);
  std::vector<std::size_t> inverse(order.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) inverse[order[pos]] = pos;
  return ad::take_rows(joined, inverse);
}

BatchStats DomainBatchNorm::update(int key, const Tensor& rows, BnMode mode) {
  const BatchStats b = batch_statistics(rows, k_);
  DomainStats& st = stats_.try_emplace(key, DomainStats::initial(dim_, k_)).first->second;
  if (mode == BnMode::kTrain) {
    const double eta = schedule_.eta_train(st.steps);
    st.train_mean = momentum_mean_update(st.train_mean, b.mean, eta);
    st.train_var = (1.0 - eta) * st.train_var + eta * b.var;
    ++st.steps;
  }
  const double et = schedule_.eta_test;
  st.test_mean = momentum_mean_update(st.test_mean, b.mean, et);
  st.test_var = (1.0 - et) * st.test_var + et * b.var;
  if (mode == BnMode::kTrain) return {st.train_mean, st.train_var};
  return {st.test_mean, st.test_var};
}

void DomainBatchNorm::observe(const Tensor& points, std::span<const int> row_domains, BnMode mode) {
  if (mode == BnMode::kEval) throw ValidationError("observe needs a statistics-updating mode");
  if (points.ndim() != 2 || points.shape()[1] != dim_ + 1 || row_domains.size() != points.shape()[0]) {
    throw DimensionError("DomainBatchNorm::observe: rows " + shape_str(points.shape()) + " with " +
                         std::to_string(row_domains.size()) + " tags");
  }
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < row_domains.size(); ++i) groups[key(row_domains[i])].push_back(i);
  const std::size_t d = dim_ + 1;
  for (const auto& [dom, idx] : groups) {
    if (idx.size() < 2) {
      throw ValidationError("domain " + std::to_string(dom) + " contributes fewer than 2 samples to a batch");
    }
    Tensor rows(Shape{idx.size(), d});
    for (std::size_t r = 0; r < idx.size(); ++r) std::copy_n(points.data() + idx[r] * d, d, rows.data() + r * d);
    update(dom, rows, mode);
  }
}

// ---------------------------------------------------------------------------

double busemann_project(const LorentzPoint& p, const Vec& direction) {
  if (static_cast<std::size_t>(direction.size()) != p.dim()) throw DimensionError("busemann: direction dimension mismatch");
  if (std::abs(direction.norm() - 1.0) > 1e-9) throw ValidationError("busemann: direction must have unit norm");
  const double rk = p.curvature().sqrt_neg();
  const double arg = rk * (p.time() - p.space().dot(direction));
  if (!(arg > 0.0)) throw NumericError("busemann: nonpositive logarithm argument");
  return std::log(arg) / rk;
}

double wasserstein_1d(std::span<const double> a, std::span<const double> b, double p) {
  if (a.size() != b.size()) {
    throw ValidationError("wasserstein_1d needs equal sample counts (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  }
  if (a.empty()) throw ValidationError("wasserstein_1d of empty samples");
  if (!(p >= 1.0)) throw ValidationError("Wasserstein exponent must be >= 1");
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += std::pow(std::abs(x[i] - y[i]), p);
  return acc / static_cast<double>(x.size());
}

Tensor sample_reference_rows(std::size_t count, std::size_t dim, Curvature k, Rng& rng, ReferenceKind kind) {
  if (count == 0 || dim == 0) throw ValidationError("sample_reference needs count >= 1 and dim >= 1");
  const double rk = k.sqrt_neg();
  Tensor out(Shape{count, dim + 1});
  std::vector<double> z(dim);
  for (std::size_t i = 0; i < count; ++i) {
    double sq = 0.0;
    for (auto& v : z) {
      v = rng.normal();
      sq += v * v;
    }
    double r = std::sqrt(sq);
    if (kind == ReferenceKind::kUnitSphere) {
      const double scale = 1.0 / std::max(r, 1e-8);
      for (auto& v : z) v *= scale;
      r *= scale;
    }
    double* row = out.data() + i * (dim + 1);
    const double f = r > kTinyNorm ? std::sinh(rk * r) / (rk * r) : 1.0;
    double space_sq = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      row[j + 1] = f * z[j];
      space_sq += row[j + 1] * row[j + 1];
    }
    row[0] = std::sqrt(space_sq - 1.0 / k.k());
  }
  return out;
}

std::vector<LorentzPoint> sample_reference(std::size_t count, std::size_t dim, Curvature k, std::uint64_t seed,
                                           ReferenceKind kind) {
  Rng rng(seed);
  return rows_to_points(sample_reference_rows(count, dim, k, rng, kind), k);
}

Tensor sample_directions(std::size_t dim, std::size_t slices, Rng& rng) {
  if (dim == 0 || slices == 0) throw ValidationError("sample_directions needs dim >= 1 and slices >= 1");
  Tensor dirs(Shape{dim, slices});
  std::vector<double> v(dim);
  for (std::size_t s = 0; s < slices; ++s) {
    double sq = 0.0;
    do {
      sq = 0.0;
      for (auto& x : v) {
        x = rng.normal();
        sq += x * x;
      }
    } while (sq == 0.0);
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t j = 0; j < dim; ++j) dirs[j * slices + s] = v[j] * inv;
  }
  return dirs;
}

namespace {

// proj[i * S + s] = B^{v_s}(row_i)
void busemann_rows(const double* rows, std::size_t m, std::size_t d, const Tensor& dirs, Curvature k, double* proj) {
  const std::size_t n = d - 1, slices = dirs.shape()[1];
  const double rk = k.sqrt_neg();
  for (std::size_t i = 0; i < m; ++i) {
    const double* p = rows + i * d;
    double* out = proj + i * slices;
    std::fill(out, out + slices, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const double pj = p[j + 1];
      const double* dj = dirs.data() + j * slices;
      for (std::size_t s = 0; s < slices; ++s) out[s] += pj * dj[s];
    }
    for (std::size_t s = 0; s < slices; ++s) out[s] = std::log(rk * (p[0] - out[s])) / rk;
  }
}

}  // namespace

ad::Var hhsw_loss(ad::Var points, std::span<const int> row_domains, const HhswOptions& options, Rng& rng, Curvature k) {
  const Shape& s = points.shape();
  if (s.size() != 2 || s[1] < 2) throw DimensionError("hhsw_loss expects [N, n+1] points, got " + shape_str(s));
  if (row_domains.size() != s[0]) throw DimensionError("hhsw_loss: one domain tag per row required");
  if (options.slices == 0) throw ValidationError("hhsw slices must be positive");
  const std::size_t n = s[1] - 1;
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < row_domains.size(); ++i) groups[row_domains[i]].push_back(i);

  ad::Tape& tape = points.tape();
  ad::Var total = tape.constant(0.0);
  for (const auto& [dom, idx] : groups) {
    if (idx.size() < 2) {
      throw ValidationError("hhsw_loss: domain " + std::to_string(dom) + " has fewer than 2 samples");
    }
    const Tensor dirs = sample_directions(n, options.slices, rng);
    const Tensor ref = sample_reference_rows(idx.size(), n, k, rng, options.reference);
    Tensor ref_proj(Shape{idx.size(), options.slices});
    busemann_rows(ref.data(), idx.size(), n + 1, dirs, k, ref_proj.data());
    ad::Var sub = groups.size() == 1 ? points : ad::take_rows(points, idx);
    total = total + ad::sliced_wasserstein_pp(nn::busemann(sub, dirs, k), ref_proj, options.exponent);
  }
  return total;
}

double hhsw_estimate(std::span<const LorentzPoint> a, std::span<const LorentzPoint> b, std::size_t slices,
                     double exponent, std::uint64_t seed, std::vector<double>* per_slice) {
  if (a.size() != b.size()) {
    throw ValidationError("hhsw needs equal sample counts (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  }
  if (a.empty()) throw ValidationError("hhsw of empty sample sets");
  if (slices == 0) throw ValidationError("hhsw slices must be positive");
  const std::size_t d = a.front().dim() + 1;
  const Curvature k = a.front().curvature();
  auto pack = [&](std::span<const LorentzPoint> pts) {
    std::vector<double> rows(pts.size() * d);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      require_compatible(a.front(), pts[i], "hhsw");
      std::copy_n(pts[i].ambient().data(), d, rows.data() + i * d);
    }
    return rows;
  };
  const auto ra = pack(a), rb = pack(b);
  Rng rng(seed);
  const Tensor dirs = sample_directions(d - 1, slices, rng);
  const std::size_t m = a.size();
  std::vector<double> pa(m * slices), pb(m * slices);
  busemann_rows(ra.data(), m, d, dirs, k, pa.data());
  busemann_rows(rb.data(), m, d, dirs, k, pb.data());
  std::vector<double> ca(m), cb(m);
  if (per_slice) per_slice->assign(slices, 0.0);
  double total = 0.0;
  for (std::size_t s = 0; s < slices; ++s) {
    for (std::size_t i = 0; i < m; ++i) {
      ca[i] = pa[i * slices + s];
      cb[i] = pb[i * slices + s];
    }
    const double w = wasserstein_1d(ca, cb, exponent);
    if (per_slice) (*per_slice)[s] = w;
    total += w;
  }
  return total / static_cast<double>(slices);
}

}  // namespace lorentzkit
