#pragma once

#include <span>
#include <vector>

#include "lorentzkit/manifold.hpp"

namespace lorentzkit {

struct FrechetResult {
  LorentzPoint mean;
  double variance = 0.0;
  int iterations = 0;
  double final_grad_norm = 0.0;
};

struct FrechetOptions {
  double tol = 1e-8;
  int max_iter = 100;
};

// Thrown when the Karcher iteration does not reach tol; carries the last iterate.
class ConvergenceError : public NumericError {
 public:
  ConvergenceError(const std::string& what, FrechetResult last)
      : NumericError(what), last_(std::move(last)) {}
  const FrechetResult& last_iterate() const noexcept { return last_; }

 private:
  FrechetResult last_;
};

// Weighted Frechet (Karcher) mean: mu <- exp_mu(s sum_i w_i log_mu(p_i)), started at the
// heaviest point or the Lorentzian centroid, whichever has lower variance. The step s
// starts at 1 and halves until the variance decreases. Weights must be nonnegative and
// sum to 1.
FrechetResult weighted_frechet_mean(std::span<const LorentzPoint> points, std::span<const double> weights,
                                    FrechetOptions options = {});
// Uniform weights.
FrechetResult frechet_mean(std::span<const LorentzPoint> points, FrechetOptions options = {});

// sum_i w_i d^2(mean, p_i)
double frechet_variance(std::span<const LorentzPoint> points, std::span<const double> weights,
                        const LorentzPoint& mean);

// Two-point weighted mean wFM_eta(prev, batch) = exp_prev(eta log_prev(batch)).
LorentzPoint momentum_mean_update(const LorentzPoint& prev, const LorentzPoint& batch_mean, double eta);

// Geodesic interpolation shared by the two-point mean; eta outside [0,1] extrapolates.
LorentzPoint geodesic_point(const LorentzPoint& from, const LorentzPoint& to, double eta);

}  // namespace lorentzkit
