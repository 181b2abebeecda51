#include "lorentzkit/frechet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace lorentzkit {

namespace {

constexpr double kMinStepScale = 1.0 / 1024.0;

void validate(std::span<const LorentzPoint> points, std::span<const double> weights) {
  if (points.empty()) throw ValidationError("Frechet mean of an empty set");
  if (weights.size() != points.size()) {
    throw DimensionError("Frechet mean: " + std::to_string(points.size()) + " points but " +
                         std::to_string(weights.size()) + " weights");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("Frechet weights must be nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ValidationError("Frechet weights sum to " + std::to_string(total) + ", expected 1");
  }
  for (const auto& p : points) require_compatible(points.front(), p, "frechet_mean");
}

}  // namespace

FrechetResult weighted_frechet_mean(std::span<const LorentzPoint> points, std::span<const double> weights,
                                    FrechetOptions options) {
  validate(points, weights);
  if (points.size() == 1) return {points.front(), 0.0, 0, 0.0};

  // Start at the better of the heaviest point and the Lorentzian centroid (weighted
  // ambient mean rescaled onto the sheet), which is close to the minimizer for spread sets.
  const auto start = static_cast<std::size_t>(std::max_element(weights.begin(), weights.end()) - weights.begin());
  LorentzPoint mu = points[start];
  double objective = frechet_variance(points, weights, mu);
  Vec sum = Vec::Zero(mu.ambient().size());
  for (std::size_t i = 0; i < points.size(); ++i) sum += weights[i] * points[i].ambient();
  const double sq = lorentz_inner(sum, sum);
  if (sq < 0.0) {
    const Curvature k = mu.curvature();
    LorentzPoint centroid = LorentzPoint::unchecked(sum / (k.sqrt_neg() * std::sqrt(-sq)), k);
    const double f = frechet_variance(points, weights, centroid);
    if (f < objective) {
      mu = std::move(centroid);
      objective = f;
    }
  }
  FrechetResult result{mu, 0.0, 0, 0.0};
  for (int it = 1; it <= options.max_iter; ++it) {
    Vec step = Vec::Zero(mu.ambient().size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (weights[i] == 0.0) continue;
      step += weights[i] * log_map(mu, points[i]).ambient();
    }
    const TangentVector update = TangentVector::unchecked(step, mu);
    const double norm = lorentz_norm(update);
    result.iterations = it;
    result.final_grad_norm = norm;
    if (norm < options.tol) {
      mu = exp_map(mu, update);
      result.mean = mu;
      result.variance = frechet_variance(points, weights, mu);
      return result;
    }
    // Unit steps overshoot on widely spread sets; halve until the variance decreases.
    double scale = 1.0;
    LorentzPoint next = exp_map(mu, update);
    double next_objective = frechet_variance(points, weights, next);
    while (next_objective > objective && scale > kMinStepScale) {
      scale *= 0.5;
      next = exp_map(mu, TangentVector::unchecked(scale * step, mu));
      next_objective = frechet_variance(points, weights, next);
    }
    mu = std::move(next);
    objective = next_objective;
  }
  result.mean = mu;
  result.variance = objective;
  throw ConvergenceError("Frechet mean did not converge in " + std::to_string(options.max_iter) +
                             " iterations (|grad| = " + std::to_string(result.final_grad_norm) + ")",
                         result);
}

FrechetResult frechet_mean(std::span<const LorentzPoint> points, FrechetOptions options) {
  const std::vector<double> w(points.size(), points.empty() ? 0.0 : 1.0 / static_cast<double>(points.size()));
  return weighted_frechet_mean(points, w, options);
}

double frechet_variance(std::span<const LorentzPoint> points, std::span<const double> weights,
                        const LorentzPoint& mean) {
  if (weights.size() != points.size()) throw DimensionError("frechet_variance: weight count mismatch");
  double var = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d = geodesic_distance(mean, points[i]);
    var += weights[i] * d * d;
  }
  return var;
}

LorentzPoint geodesic_point(const LorentzPoint& from, const LorentzPoint& to, double eta) {
  if (eta == 0.0) return from;
  if (eta == 1.0) return to;
  const TangentVector v = log_map(from, to);
  return exp_map(from, TangentVector::unchecked(eta * v.ambient(), from));
}

LorentzPoint momentum_mean_update(const LorentzPoint& prev, const LorentzPoint& batch_mean, double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw ValidationError("momentum must lie in [0,1]");
  require_compatible(prev, batch_mean, "momentum_mean_update");
  return geodesic_point(prev, batch_mean, eta);
}

}  // namespace lorentzkit
