#include "lorentzkit/manifold.hpp"

#include <algorithm>
#include <string>

namespace lorentzkit {

namespace {

// Residuals are measured relative to the magnitude of the terms that cancel.
double constraint_scale(const Vec& ambient, Curvature k) {
  return std::max(k.origin_time() * k.origin_time(), ambient[0] * ambient[0]);
}

}  // namespace

Curvature::Curvature(double k) : k_(k), sqrt_neg_(0.0) {
  if (!(k < 0.0) || !std::isfinite(k)) {
    throw ValidationError("curvature must be finite and strictly negative, got " + std::to_string(k));
  }
  sqrt_neg_ = std::sqrt(-k);
}

LorentzPoint::LorentzPoint(Vec ambient, Curvature curvature, std::nullptr_t)
    : ambient_(std::move(ambient)), curvature_(curvature) {}

LorentzPoint::LorentzPoint(Vec ambient, Curvature curvature, double tol)
    : LorentzPoint(std::move(ambient), curvature, nullptr) {
  if (ambient_.size() < 2) {
    throw DimensionError("Lorentz point needs at least 2 ambient coordinates");
  }
  if (!ambient_.allFinite()) throw ConstraintError("non-finite Lorentz point");
  if (!(ambient_[0] > 0.0)) throw ConstraintError("time component must be positive");
  const double residual = constraint_residual();
  if (residual > tol * constraint_scale(ambient_, curvature_)) {
    throw ConstraintError("<p,p>_L deviates from 1/K by " + std::to_string(residual));
  }
}

LorentzPoint LorentzPoint::unchecked(Vec ambient, Curvature curvature) {
  return LorentzPoint(std::move(ambient), curvature, nullptr);
}

LorentzPoint LorentzPoint::origin(std::size_t n, Curvature curvature) {
  Vec a = Vec::Zero(static_cast<Eigen::Index>(n + 1));
  a[0] = curvature.origin_time();
  return unchecked(std::move(a), curvature);
}

double LorentzPoint::constraint_residual() const {
  return std::abs(lorentz_inner(ambient_, ambient_) - 1.0 / curvature_.k());
}

bool LorentzPoint::is_origin(double tol) const {
  return space().cwiseAbs().maxCoeff() <= tol && std::abs(time() - curvature_.origin_time()) <= tol;
}

TangentVector::TangentVector(Vec ambient, LorentzPoint base, std::nullptr_t)
    : ambient_(std::move(ambient)), base_(std::move(base)) {}

TangentVector::TangentVector(Vec ambient, LorentzPoint base, double tol)
    : TangentVector(std::move(ambient), std::move(base), nullptr) {
  if (ambient_.size() != base_.ambient().size()) {
    throw DimensionError("tangent vector length does not match its base point");
  }
  const double inner = lorentz_inner(base_.ambient(), ambient_);
  const double scale = std::max(1.0, base_.ambient().norm() * ambient_.norm());
  if (std::abs(inner) > tol * scale) {
    throw ConstraintError("vector is not tangent at its base, <base,v>_L = " + std::to_string(inner));
  }
}

TangentVector TangentVector::unchecked(Vec ambient, LorentzPoint base) {
  return TangentVector(std::move(ambient), std::move(base), nullptr);
}

TangentVector TangentVector::zero(const LorentzPoint& base) {
  return unchecked(Vec::Zero(base.ambient().size()), base);
}

double lorentz_inner(const Vec& u, const Vec& v) {
  if (u.size() != v.size()) {
    throw DimensionError("lorentz_inner operands have lengths " + std::to_string(u.size()) + " and " +
                         std::to_string(v.size()));
  }
  if (u.size() < 2) throw DimensionError("lorentz_inner needs vectors of length >= 2");
  const Eigen::Index n = u.size() - 1;
  return u.tail(n).dot(v.tail(n)) - u[0] * v[0];
}

double lorentz_norm(const TangentVector& v) {
  return std::sqrt(std::max(0.0, lorentz_inner(v.ambient(), v.ambient())));
}

void require_compatible(const LorentzPoint& p, const LorentzPoint& q, const char* op) {
  if (p.dim() != q.dim()) {
    throw DimensionError(std::string(op) + ": points of dimension " + std::to_string(p.dim()) + " and " +
                         std::to_string(q.dim()));
  }
  if (!(p.curvature() == q.curvature())) {
    throw ValidationError(std::string(op) + ": points carry different curvatures");
  }
}

double geodesic_distance(const LorentzPoint& p, const LorentzPoint& q) {
  require_compatible(p, q, "geodesic_distance");
  const Curvature k = p.curvature();
  const double beta = k.k() * lorentz_inner(p, q);
  if (beta < 1.5) {
    // acosh(beta) = 2 asinh(sqrt(-K) |p - q|_L / 2); the chord form avoids the
    // cancellation in beta - 1 for nearby points.
    const Vec diff = p.ambient() - q.ambient();
    const double chord = std::sqrt(std::max(0.0, lorentz_inner(diff, diff)));
    return 2.0 * std::asinh(0.5 * k.sqrt_neg() * chord) / k.sqrt_neg();
  }
  return std::acosh(std::max(kAcoshFloor, beta)) / k.sqrt_neg();
}

LorentzPoint exp_map(const LorentzPoint& base, const TangentVector& v) {
  if (v.ambient().size() != base.ambient().size()) {
    throw DimensionError("exp_map: tangent vector and base differ in length");
  }
  const Curvature k = base.curvature();
  const double norm = lorentz_norm(v);
  if (!std::isfinite(norm)) throw NumericError("exp_map: non-finite tangent norm");
  if (norm < kTinyNorm) return base;
  const double alpha = k.sqrt_neg() * norm;
  Vec out = std::cosh(alpha) * base.ambient() + (std::sinh(alpha) / alpha) * v.ambient();
  // Recompute time from space so the result sits on the sheet to rounding.
  const Eigen::Index n = out.size() - 1;
  out[0] = std::sqrt(out.tail(n).squaredNorm() - 1.0 / k.k());
  return LorentzPoint::unchecked(std::move(out), k);
}

TangentVector log_map(const LorentzPoint& base, const LorentzPoint& q) {
  require_compatible(base, q, "log_map");
  const Curvature k = base.curvature();
  const double beta = std::max(1.0, k.k() * lorentz_inner(base, q));
  Vec u = q.ambient() - beta * base.ambient();
  if (beta - 1.0 < 1e-7) {
    // acosh(b)/sqrt(b^2-1) = 1 - (b-1)/3 + O((b-1)^2)
    if (u.cwiseAbs().maxCoeff() < kTinyNorm * kTinyNorm) return TangentVector::zero(base);
    u *= 1.0 - (beta - 1.0) / 3.0;
  } else {
    u *= std::acosh(std::max(kAcoshFloor, beta)) / std::sqrt(beta * beta - 1.0);
  }
  return TangentVector::unchecked(std::move(u), base);
}

TangentVector parallel_transport(const LorentzPoint& p, const LorentzPoint& q, const TangentVector& v) {
  require_compatible(p, q, "parallel_transport");
  if (v.ambient().size() != p.ambient().size()) {
    throw DimensionError("parallel_transport: tangent vector length mismatch");
  }
  const double kk = p.curvature().k();
  const double denom = 1.0 + kk * lorentz_inner(p, q);
  if (std::abs(denom) < 1e-300 || !std::isfinite(denom)) {
    throw NumericError("parallel_transport: degenerate denominator");
  }
  const double coef = kk * lorentz_inner(q.ambient(), v.ambient()) / denom;
  Vec out = v.ambient() - coef * (p.ambient() + q.ambient());
  return TangentVector::unchecked(std::move(out), q);
}

LorentzPoint lift_space(const Vec& space, Curvature curvature) {
  if (!space.allFinite()) throw ValidationError("lift_space: non-finite space component");
  Vec a(space.size() + 1);
  a[0] = std::sqrt(space.squaredNorm() - 1.0 / curvature.k());
  a.tail(space.size()) = space;
  return LorentzPoint::unchecked(std::move(a), curvature);
}

Vec clamp_norm(const Vec& space, double max_norm) {
  if (!(max_norm > 0.0)) throw ValidationError("clamp_norm: max_norm must be positive");
  const double norm = space.norm();
  if (norm > max_norm) return space * (max_norm / norm);
  return space;
}

TangentVector tangent_at_origin(const Vec& space, Curvature curvature) {
  Vec a(space.size() + 1);
  a[0] = 0.0;
  a.tail(space.size()) = space;
  return TangentVector::unchecked(std::move(a), LorentzPoint::origin(static_cast<std::size_t>(space.size()), curvature));
}

}  // namespace lorentzkit
