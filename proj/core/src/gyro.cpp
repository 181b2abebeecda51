#include "lorentzkit/gyro.hpp"

namespace lorentzkit {

LorentzPoint gyroadd_riemannian(const LorentzPoint& p, const LorentzPoint& q) {
  require_compatible(p, q, "gyroadd");
  const LorentzPoint origin = LorentzPoint::origin(p.dim(), p.curvature());
  return exp_map(p, parallel_transport(origin, p, log_map(origin, q)));
}

LorentzPoint gyromul_riemannian(double t, const LorentzPoint& p) {
  const LorentzPoint origin = LorentzPoint::origin(p.dim(), p.curvature());
  const TangentVector v = log_map(origin, p);
  return exp_map(origin, TangentVector::unchecked(t * v.ambient(), origin));
}

LorentzPoint gyroadd_closed(const LorentzPoint& p, const LorentzPoint& q) {
  require_compatible(p, q, "gyroadd");
  if (q.is_origin()) return p;
  if (p.is_origin()) return q;

  const Curvature curv = p.curvature();
  const double k = curv.k();
  const double rk = curv.sqrt_neg();
  const auto ps = p.space();
  const auto qs = q.space();

  const double a = 1.0 + rk * p.time();
  const double b = 1.0 + rk * q.time();
  const double np = ps.squaredNorm();
  const double nq = qs.squaredNorm();
  const double spq = ps.dot(qs);

  const double d = a * a * b * b - 2.0 * k * a * b * spq + k * k * np * nq;
  const double n = a * a * nq + 2.0 * a * b * spq + b * b * np;
  const double as = a * b * b - 2.0 * k * b * spq - k * a * nq;
  const double aq = b * (a * a + k * np);

  const double denom = d + k * n;
  if (!(std::abs(denom) > 1e-300) || !std::isfinite(denom)) {
    throw NumericError("gyroadd_closed: D + K N vanishes");
  }
  Vec out(p.ambient().size());
  out[0] = (d - k * n) / (rk * denom);
  out.tail(ps.size()) = (2.0 / denom) * (as * ps + aq * qs);
  return LorentzPoint::unchecked(std::move(out), curv);
}

LorentzPoint gyromul_closed(double t, const LorentzPoint& p) {
  if (t == 0.0 || p.is_origin()) return LorentzPoint::origin(p.dim(), p.curvature());
  const Curvature curv = p.curvature();
  const double rk = curv.sqrt_neg();
  const double norm = p.space().norm();
  // theta = acosh(sqrt|K| p_t) = asinh(sqrt|K| |p_s|); asinh is exact near the origin.
  const double theta = std::asinh(rk * norm);
  Vec out(p.ambient().size());
  out[0] = std::cosh(t * theta) / rk;
  out.tail(p.dim()) = (std::sinh(t * theta) / (rk * norm)) * p.space();
  return LorentzPoint::unchecked(std::move(out), curv);
}

LorentzPoint gyroinverse(const LorentzPoint& p) {
  Vec out = p.ambient();
  out.tail(p.dim()) = -out.tail(p.dim());
  return LorentzPoint::unchecked(std::move(out), p.curvature());
}

LorentzPoint gyration(const LorentzPoint& a, const LorentzPoint& b, const LorentzPoint& z) {
  return gyroadd(gyroinverse(gyroadd(a, b)), gyroadd(a, gyroadd(b, z)));
}

}  // namespace lorentzkit
