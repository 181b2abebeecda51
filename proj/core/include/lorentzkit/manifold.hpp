#pragma once

// Lorentz (hyperboloid) model of hyperbolic space with constant curvature K < 0.
//
//   L^n_K = { p in R^{n+1} : <p,p>_L = 1/K, p_t > 0 },   <u,v>_L = <u_s,v_s> - u_t v_t
//
// Points store the ambient coordinates [time, space...]. Everything here is float64
// and pure; the autodiff counterparts used by the network live in layers.hpp.

#include <Eigen/Core>
#include <cmath>
#include <cstddef>

#include "lorentzkit/error.hpp"

namespace lorentzkit {

using Vec = Eigen::VectorXd;

inline constexpr double kManifoldTol = 1e-7;
// acosh arguments are clamped here; float cancellation near coincident points lands
// marginally below 1.
inline constexpr double kAcoshFloor = 1.0 + 1e-15;
// Tangent vectors with Lorentz norm below this take the series limit in exp/log.
inline constexpr double kTinyNorm = 1e-12;
// Default space-component bound applied before lifts.
inline constexpr double kDefaultMaxNorm = 32.0;

class Curvature {
 public:
  explicit Curvature(double k = -1.0);

  double k() const noexcept { return k_; }
  // sqrt(-K)
  double sqrt_neg() const noexcept { return sqrt_neg_; }
  // Time component of the origin, sqrt(-1/K).
  double origin_time() const noexcept { return 1.0 / sqrt_neg_; }

  friend bool operator==(const Curvature& a, const Curvature& b) { return a.k_ == b.k_; }

 private:
  double k_;
  double sqrt_neg_;
};

class LorentzPoint {
 public:
  // Validates <p,p>_L = 1/K (relative to the point's scale) and p_t > 0.
  LorentzPoint(Vec ambient, Curvature curvature, double tol = kManifoldTol);

  // Skips validation; callers guarantee the constraint (e.g. after a lift).
  static LorentzPoint unchecked(Vec ambient, Curvature curvature);
  static LorentzPoint origin(std::size_t n, Curvature curvature = Curvature());

  double time() const { return ambient_[0]; }
  auto space() const { return ambient_.tail(ambient_.size() - 1); }
  const Vec& ambient() const noexcept { return ambient_; }
  // Manifold dimension n (ambient has n+1 entries).
  std::size_t dim() const noexcept { return static_cast<std::size_t>(ambient_.size()) - 1; }
  Curvature curvature() const noexcept { return curvature_; }

  // |<p,p>_L - 1/K|
  double constraint_residual() const;
  bool is_origin(double tol = 0.0) const;

 private:
  LorentzPoint(Vec ambient, Curvature curvature, std::nullptr_t);

  Vec ambient_;
  Curvature curvature_;
};

class TangentVector {
 public:
  // Validates <base, v>_L = 0 within tol (scaled by the magnitudes involved).
  TangentVector(Vec ambient, LorentzPoint base, double tol = kManifoldTol);

  static TangentVector unchecked(Vec ambient, LorentzPoint base);
  static TangentVector zero(const LorentzPoint& base);

  const Vec& ambient() const noexcept { return ambient_; }
  const LorentzPoint& base() const noexcept { return base_; }

 private:
  TangentVector(Vec ambient, LorentzPoint base, std::nullptr_t);

  Vec ambient_;
  LorentzPoint base_;
};

// <u_s, v_s> - u_t v_t. Throws DimensionError on length mismatch or length < 2.
double lorentz_inner(const Vec& u, const Vec& v);
inline double lorentz_inner(const LorentzPoint& p, const LorentzPoint& q) {
  return lorentz_inner(p.ambient(), q.ambient());
}

// sqrt(max(0, <v,v>_L)); tangent vectors are spacelike.
double lorentz_norm(const TangentVector& v);

double geodesic_distance(const LorentzPoint& p, const LorentzPoint& q);

LorentzPoint exp_map(const LorentzPoint& base, const TangentVector& v);
TangentVector log_map(const LorentzPoint& base, const LorentzPoint& q);
TangentVector parallel_transport(const LorentzPoint& p, const LorentzPoint& q, const TangentVector& v);

// [sqrt(|s|^2 - 1/K), s]
LorentzPoint lift_space(const Vec& space, Curvature curvature = Curvature());
// Rescales s to max_norm when |s| > max_norm.
Vec clamp_norm(const Vec& space, double max_norm = kDefaultMaxNorm);

// Tangent vector [0, s] at the origin.
TangentVector tangent_at_origin(const Vec& space, Curvature curvature = Curvature());

// Throws DimensionError/ConstraintError-style messages for mismatched operands.
void require_compatible(const LorentzPoint& p, const LorentzPoint& q, const char* op);

}  // namespace lorentzkit
