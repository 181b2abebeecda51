#include <gtest/gtest.h>

#include <cmath>

#include "lorentzkit/manifold.hpp"
#include "test_util.hpp"

using namespace lorentzkit;
using namespace lorentzkit::testing;

TEST(Curvature, RejectsNonNegative) {
  EXPECT_THROW(Curvature(0.0), ValidationError);
  EXPECT_THROW(Curvature(1.0), ValidationError);
  EXPECT_THROW(Curvature(std::nan("")), ValidationError);
  EXPECT_DOUBLE_EQ(Curvature(-4.0).origin_time(), 0.5);
}

TEST(LorentzPoint, ValidatesConstraint) {
  EXPECT_NO_THROW(LorentzPoint(vec({std::sqrt(2.0), 1.0}), Curvature()));
  EXPECT_THROW(LorentzPoint(vec({1.0, 1.0}), Curvature()), ConstraintError);
  EXPECT_THROW(LorentzPoint(vec({-1.0, 0.0}), Curvature()), ConstraintError);
  EXPECT_THROW(LorentzPoint(vec({1.0}), Curvature()), DimensionError);
}

TEST(LorentzInner, HandValues) {
  EXPECT_DOUBLE_EQ(lorentz_inner(vec({1, 0}), vec({1, 0})), -1.0);
  EXPECT_DOUBLE_EQ(lorentz_inner(vec({0, 1}), vec({0, 1})), 1.0);
  EXPECT_NEAR(lorentz_inner(vec({std::sqrt(2.0), 1}), vec({std::sqrt(2.0), 1})), -1.0, 1e-15);
  EXPECT_THROW(lorentz_inner(vec({1, 0}), vec({1, 0, 0})), DimensionError);
}

TEST(GeodesicDistance, HandValues) {
  const LorentzPoint o = LorentzPoint::origin(1);
  EXPECT_EQ(geodesic_distance(o, o), 0.0);
  const LorentzPoint q(vec({std::cosh(1.0), std::sinh(1.0)}), Curvature());
  EXPECT_NEAR(geodesic_distance(o, q), 1.0, 1e-14);
}

TEST(GeodesicDistance, SymmetricAndScalesWithCurvature) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const LorentzPoint p = random_point(4, 3.0, rng), q = random_point(4, 3.0, rng);
    EXPECT_NEAR(geodesic_distance(p, q), geodesic_distance(q, p), 1e-12);
  }
  // exp_0 of a unit tangent sits at distance 1 for every curvature.
  for (double k : {-0.25, -1.0, -4.0}) {
    const Curvature c(k);
    const LorentzPoint p = exp_map(LorentzPoint::origin(3, c), tangent_at_origin(vec({0.6, 0.8, 0.0}), c));
    EXPECT_NEAR(geodesic_distance(LorentzPoint::origin(3, c), p), 1.0, 1e-12);
  }
}

TEST(GeodesicDistance, NearbyPointsKeepPrecision) {
  const LorentzPoint o = LorentzPoint::origin(2);
  const LorentzPoint p = exp_map(o, tangent_at_origin(vec({1e-9, 0.0})));
  EXPECT_NEAR(geodesic_distance(o, p), 1e-9, 1e-20);
}

TEST(ExpLog, HandValues) {
  const LorentzPoint o = LorentzPoint::origin(1);
  const LorentzPoint e = exp_map(o, tangent_at_origin(vec({1.0})));
  EXPECT_NEAR(e.time(), std::cosh(1.0), 1e-14);
  EXPECT_NEAR(e.ambient()[1], std::sinh(1.0), 1e-14);

  const LorentzPoint y = exp_map(LorentzPoint::origin(2), tangent_at_origin(vec({2.0, 0.0})));
  EXPECT_NEAR(lorentz_inner(y, y), -1.0, 1e-12);

  const TangentVector l = log_map(o, LorentzPoint(vec({std::cosh(1.0), std::sinh(1.0)}), Curvature()));
  EXPECT_NEAR(l.ambient()[0], 0.0, 1e-14);
  EXPECT_NEAR(l.ambient()[1], 1.0, 1e-14);
}

TEST(ExpLog, ZeroCases) {
  Rng rng(2);
  const LorentzPoint p = random_point(3, 2.0, rng);
  EXPECT_EQ(exp_map(p, TangentVector::zero(p)).ambient(), p.ambient());
  EXPECT_LT(log_map(p, p).ambient().norm(), 1e-12);
}

TEST(ExpLog, RoundTripProperty) {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const Curvature k(i % 2 ? -1.0 : -0.3);
    const LorentzPoint p = random_point(5, 2.0, rng, k);
    const LorentzPoint q = random_point(5, 2.0, rng, k);
    const LorentzPoint back = exp_map(p, log_map(p, q));
    EXPECT_LT(max_abs_diff(back.ambient(), q.ambient()) / q.ambient().norm(), 1e-12);
    // The tangent at p has norm d(p, q).
    EXPECT_NEAR(lorentz_norm(log_map(p, q)), geodesic_distance(p, q), 1e-10);
  }
}

TEST(ExpLog, RejectsMismatch) {
  const LorentzPoint a = LorentzPoint::origin(2), b = LorentzPoint::origin(3);
  EXPECT_THROW(log_map(a, b), DimensionError);
  EXPECT_THROW(log_map(a, LorentzPoint::origin(2, Curvature(-2.0))), ValidationError);
}

TEST(ParallelTransport, IdentityAndIsometry) {
  Rng rng(4);
  for (int i = 0; i < 300; ++i) {
    const LorentzPoint p = random_point(4, 3.0, rng), q = random_point(4, 3.0, rng);
    const TangentVector v = random_tangent(p, 3.0, rng), w = random_tangent(p, 3.0, rng);
    EXPECT_LT(max_abs_diff(parallel_transport(p, p, v).ambient(), v.ambient()), 1e-12);
    const TangentVector tv = parallel_transport(p, q, v), tw = parallel_transport(p, q, w);
    EXPECT_NEAR(lorentz_inner(tv.ambient(), tw.ambient()), lorentz_inner(v.ambient(), w.ambient()), 1e-8);
    EXPECT_NEAR(lorentz_inner(q.ambient(), tv.ambient()), 0.0, 1e-8);
  }
}

TEST(Lift, HandValuesAndConstraint) {
  EXPECT_EQ(lift_space(vec({0, 0, 0})).ambient(), LorentzPoint::origin(3).ambient());
  const LorentzPoint p = lift_space(vec({1.0}));
  EXPECT_NEAR(p.time(), std::sqrt(2.0), 1e-15);
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const Curvature k(-rng.uniform(0.1, 3.0));
    const LorentzPoint q = lift_space(3.0 * gaussian(6, rng), k);
    EXPECT_LT(q.constraint_residual(), 1e-12 * std::max(1.0, q.time() * q.time()));
  }
}

TEST(ClampNorm, HandValues) {
  EXPECT_EQ(clamp_norm(vec({3, 4}), 10.0), vec({3, 4}));
  EXPECT_LT(max_abs_diff(clamp_norm(vec({3, 4}), 1.0), vec({0.6, 0.8})), 1e-15);
  Rng rng(6);
  for (int i = 0; i < 100; ++i) EXPECT_LE(clamp_norm(10.0 * gaussian(5, rng), 2.5).norm(), 2.5 + 1e-12);
}

TEST(TangentVector, ValidatesTangency) {
  const LorentzPoint o = LorentzPoint::origin(2);
  EXPECT_NO_THROW(TangentVector(vec({0, 1, 2}), o));
  EXPECT_THROW(TangentVector(vec({1, 0, 0}), o), ConstraintError);
}
