#include "lorentzkit/hyperbolicity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "lorentzkit/rng.hpp"

namespace lorentzkit {

void validate_metric(const DistanceMatrix& d) {
  if (d.rows() != d.cols()) throw ValidationError("distance matrix is not square");
  const Eigen::Index n = d.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (d(i, i) != 0.0) throw ValidationError("distance matrix has nonzero diagonal at " + std::to_string(i));
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double a = d(i, j);
      if (!std::isfinite(a) || a < 0.0) {
        throw ValidationError("distance matrix entry (" + std::to_string(i) + "," + std::to_string(j) +
                              ") is negative or non-finite");
      }
      if (a != d(j, i)) throw ValidationError("distance matrix is not symmetric");
    }
  }
}

double gromov_product(const DistanceMatrix& d, std::size_t i, std::size_t j, std::size_t w) {
  const auto n = static_cast<std::size_t>(d.rows());
  if (i >= n || j >= n || w >= n) throw ValidationError("gromov_product: index out of range");
  const auto ii = static_cast<Eigen::Index>(i);
  const auto jj = static_cast<Eigen::Index>(j);
  const auto ww = static_cast<Eigen::Index>(w);
  return 0.5 * (d(ii, ww) + d(jj, ww) - d(ii, jj));
}

namespace {

double delta_at_base(const DistanceMatrix& d, std::size_t w) {
  const auto n = static_cast<std::size_t>(d.rows());
  // Row-major Gromov product matrix; rows are scanned contiguously below.
  std::vector<double> a(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) a[i * n + j] = gromov_product(d, i, j, w);
  }
  std::vector<double> row(n);
  double delta = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    std::fill(row.begin(), row.end(), -std::numeric_limits<double>::infinity());
    const double* ap = &a[p * n];
    for (std::size_t z = 0; z < n; ++z) {
      const double apz = ap[z];
      const double* az = &a[z * n];
      double* r = row.data();
      for (std::size_t q = 0; q < n; ++q) {
        const double m = apz < az[q] ? apz : az[q];
        r[q] = r[q] > m ? r[q] : m;
      }
    }
    for (std::size_t q = 0; q < n; ++q) delta = std::max(delta, row[q] - ap[q]);
  }
  return delta;
}

}  // namespace

double delta_exact(const DistanceMatrix& d, std::size_t w) {
  validate_metric(d);
  if (static_cast<std::size_t>(d.rows()) > kMaxDeltaPoints) {
    throw ValidationError("delta_exact supports at most " + std::to_string(kMaxDeltaPoints) + " points");
  }
  if (w >= static_cast<std::size_t>(d.rows())) throw ValidationError("delta_exact: base index out of range");
  return delta_at_base(d, w);
}

double delta_exact_all_bases(const DistanceMatrix& d) {
  validate_metric(d);
  double delta = 0.0;
  for (std::size_t w = 0; w < static_cast<std::size_t>(d.rows()); ++w) delta = std::max(delta, delta_at_base(d, w));
  return delta;
}

double delta_relative(double delta, double diameter) { return diameter > 0.0 ? 2.0 * delta / diameter : 0.0; }

DistanceMatrix euclidean_distances(const Eigen::MatrixXd& rows) {
  const Eigen::Index n = rows.rows();
  DistanceMatrix d = DistanceMatrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = (rows.row(i) - rows.row(j)).norm();
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

DistanceMatrix geodesic_distances(const std::vector<LorentzPoint>& points) {
  const auto n = static_cast<Eigen::Index>(points.size());
  DistanceMatrix d = DistanceMatrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = geodesic_distance(points[static_cast<std::size_t>(i)], points[static_cast<std::size_t>(j)]);
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

namespace {

struct Moments {
  double sum = 0.0;
  double sum_sq = 0.0;
  void add(double v) {
    sum += v;
    sum_sq += v * v;
  }
  double mean(std::size_t n) const { return sum / static_cast<double>(n); }
  double stddev(std::size_t n) const {
    if (n < 2) return 0.0;
    const double m = mean(n);
    return std::sqrt(std::max(0.0, (sum_sq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1)));
  }
};

template <typename DistanceFn>
HyperbolicityReport sample_batches(std::size_t n, DeltaSampling sampling, DistanceFn&& distances) {
  if (n < 4) throw ValidationError("delta-hyperbolicity needs at least 4 points, got " + std::to_string(n));
  if (sampling.batches == 0 || sampling.batch < 4) throw ValidationError("delta sampling needs batch >= 4 and batches >= 1");
  Rng rng(sampling.seed);
  const std::size_t take = std::min(sampling.batch, n);
  if (take > kMaxDeltaPoints) throw ValidationError("delta batch exceeds " + std::to_string(kMaxDeltaPoints));
  Moments delta, diam, rel;
  for (std::size_t b = 0; b < sampling.batches; ++b) {
    const auto idx = rng.sample_without_replacement(n, take);
    const DistanceMatrix d = distances(idx);
    const double dl = delta_at_base(d, 0);
    const double dm = d.maxCoeff();
    delta.add(dl);
    diam.add(dm);
    rel.add(delta_relative(dl, dm));
  }
  HyperbolicityReport r;
  r.delta = delta.mean(sampling.batches);
  r.diameter = diam.mean(sampling.batches);
  r.delta_rel = rel.mean(sampling.batches);
  r.delta_std = delta.stddev(sampling.batches);
  r.diameter_std = diam.stddev(sampling.batches);
  r.delta_rel_std = rel.stddev(sampling.batches);
  r.sample_size = take;
  r.batches = sampling.batches;
  return r;
}

}  // namespace

HyperbolicityReport delta_sampled(const Eigen::MatrixXd& rows, DeltaMetric metric, DeltaSampling sampling,
                                  Curvature curvature) {
  if (!rows.allFinite()) throw ValidationError("delta_sampled: non-finite input");
  if (metric == DeltaMetric::kLorentz) {
    std::vector<LorentzPoint> pts;
    pts.reserve(static_cast<std::size_t>(rows.rows()));
    for (Eigen::Index i = 0; i < rows.rows(); ++i) pts.emplace_back(rows.row(i).transpose(), curvature, 1e-5);
    return delta_sampled(pts, sampling);
  }
  return sample_batches(static_cast<std::size_t>(rows.rows()), sampling, [&](const std::vector<std::size_t>& idx) {
    Eigen::MatrixXd sub(static_cast<Eigen::Index>(idx.size()), rows.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) sub.row(static_cast<Eigen::Index>(i)) = rows.row(static_cast<Eigen::Index>(idx[i]));
    return euclidean_distances(sub);
  });
}

HyperbolicityReport delta_sampled(const std::vector<LorentzPoint>& points, DeltaSampling sampling) {
  return sample_batches(points.size(), sampling, [&](const std::vector<std::size_t>& idx) {
    std::vector<LorentzPoint> sub;
    sub.reserve(idx.size());
    for (auto i : idx) sub.push_back(points[i]);
    return geodesic_distances(sub);
  });
}

}  // namespace lorentzkit
