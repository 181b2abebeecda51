#pragma once

// Gromov delta-hyperbolicity of finite metric spaces (four-point condition) and the
// scale-invariant delta_rel = 2 delta / diameter.

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "lorentzkit/manifold.hpp"

namespace lorentzkit {

using DistanceMatrix = Eigen::MatrixXd;

struct HyperbolicityReport {
  double delta = 0.0;
  double diameter = 0.0;
  double delta_rel = 0.0;
  double delta_std = 0.0;
  double diameter_std = 0.0;
  double delta_rel_std = 0.0;
  std::size_t sample_size = 0;
  std::size_t batches = 0;
};

enum class DeltaMetric { kEuclidean, kLorentz };

inline constexpr std::size_t kMaxDeltaPoints = 2000;

// Symmetric, zero diagonal, finite and nonnegative. Throws ValidationError otherwise.
void validate_metric(const DistanceMatrix& d);

// (i, j)_w = (d(i,w) + d(j,w) - d(i,j)) / 2
double gromov_product(const DistanceMatrix& d, std::size_t i, std::size_t j, std::size_t w);

// Tight delta for a fixed base w via the (max, min) matrix product of the Gromov
// product matrix: max_{p,q} [max_z min(A_pz, A_zq) - A_pq]. O(n^3).
double delta_exact(const DistanceMatrix& d, std::size_t w);
// Maximum of delta_exact over every base point.
double delta_exact_all_bases(const DistanceMatrix& d);

// 2 delta / diam, 0 when diam == 0.
double delta_relative(double delta, double diameter);

DistanceMatrix euclidean_distances(const Eigen::MatrixXd& rows);
DistanceMatrix geodesic_distances(const std::vector<LorentzPoint>& points);

struct DeltaSampling {
  std::size_t batch = 1500;
  std::size_t batches = 10;
  std::uint64_t seed = 0;
};

// Repeatedly subsamples min(batch, n) rows without replacement, evaluates delta at the
// first sampled base and reports mean/std of delta, diameter and delta_rel.
// Rows are Lorentz ambient coordinates when metric == kLorentz.
HyperbolicityReport delta_sampled(const Eigen::MatrixXd& rows, DeltaMetric metric, DeltaSampling sampling,
                                  Curvature curvature = Curvature());
HyperbolicityReport delta_sampled(const std::vector<LorentzPoint>& points, DeltaSampling sampling);

}  // namespace lorentzkit
