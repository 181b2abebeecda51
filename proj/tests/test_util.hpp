#pragma once

#include <Eigen/Core>

#include "lorentzkit/manifold.hpp"
#include "lorentzkit/rng.hpp"

namespace lorentzkit::testing {

inline Vec gaussian(std::size_t n, Rng& rng) {
  Vec v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
  return v;
}

// exp at the origin of a random direction with norm uniform in [0, max_norm].
inline LorentzPoint random_point(std::size_t n, double max_norm, Rng& rng, Curvature k = Curvature()) {
  Vec s = gaussian(n, rng);
  s *= rng.uniform(0.0, max_norm) / s.norm();
  return exp_map(LorentzPoint::origin(n, k), tangent_at_origin(s, k));
}

inline TangentVector random_tangent(const LorentzPoint& p, double max_norm, Rng& rng) {
  Vec s = gaussian(p.dim(), rng);
  s *= rng.uniform(0.0, max_norm) / s.norm();
  const LorentzPoint o = LorentzPoint::origin(p.dim(), p.curvature());
  return parallel_transport(o, p, tangent_at_origin(s, p.curvature()));
}

inline Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

inline double max_abs_diff(const Vec& a, const Vec& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace lorentzkit::testing
