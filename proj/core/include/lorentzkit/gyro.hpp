#pragma once

// Lorentz gyrovector operations. The closed forms are the default; the *_riemannian
// versions compose exp/log/parallel transport at the origin and serve as the oracle.

#include "lorentzkit/manifold.hpp"

namespace lorentzkit {

// Exp_p(PT_{0->p}(Log_0(q)))
LorentzPoint gyroadd_riemannian(const LorentzPoint& p, const LorentzPoint& q);
// Exp_0(t Log_0(p))
LorentzPoint gyromul_riemannian(double t, const LorentzPoint& p);

LorentzPoint gyroadd_closed(const LorentzPoint& p, const LorentzPoint& q);
LorentzPoint gyromul_closed(double t, const LorentzPoint& p);

// [p_t, -p_s]
LorentzPoint gyroinverse(const LorentzPoint& p);

inline LorentzPoint gyroadd(const LorentzPoint& p, const LorentzPoint& q) { return gyroadd_closed(p, q); }
inline LorentzPoint gyromul(double t, const LorentzPoint& p) { return gyromul_closed(t, p); }

// gyr[a,b]z = (-(a+b)) + (a + (b + z)), evaluated as composite gyroadditions.
LorentzPoint gyration(const LorentzPoint& a, const LorentzPoint& b, const LorentzPoint& z);

}  // namespace lorentzkit
