#pragma once

// Hyperbolic batch normalization, its domain-specific momentum variant, and the
// horospherical sliced-Wasserstein discrepancy.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lorentzkit/autodiff.hpp"
#include "lorentzkit/frechet.hpp"
#include "lorentzkit/manifold.hpp"
#include "lorentzkit/rng.hpp"

namespace lorentzkit {

inline constexpr double kBnEpsilon = 1e-5;

struct MomentumSchedule {
  double eta0 = 1.0;
  double decay_rate = 0.9;
  double eta_min = 0.01;
  double eta_test = 0.1;

  // max(eta_min, eta0 * decay_rate^k)
  double eta_train(std::size_t k) const;
  void validate() const;
};

struct DomainStats {
  LorentzPoint train_mean;
  LorentzPoint test_mean;
  double train_var = 1.0;
  double test_var = 1.0;
  std::size_t steps = 0;

  // mean = origin, var = 1
  static DomainStats initial(std::size_t dim, Curvature k);
};

struct BatchStats {
  LorentzPoint mean;
  double var = 0.0;
};

// Frechet mean and variance. A Karcher iteration that stalls keeps its last iterate.
BatchStats batch_statistics(std::span<const LorentzPoint> points, FrechetOptions options = {});
// Rows of a [m, n+1] tensor.
BatchStats batch_statistics(const Tensor& rows, Curvature k, FrechetOptions options = {});

std::vector<LorentzPoint> rows_to_points(const Tensor& rows, Curvature k);

// (gamma / sqrt(var + eps)) (x) ((-)mean (+) p) for every point.
std::vector<LorentzPoint> hbn_normalize(std::span<const LorentzPoint> batch, const LorentzPoint& mean, double var,
                                        double gamma, double eps = kBnEpsilon);
// Batch statistics followed by hbn_normalize.
std::vector<LorentzPoint> hbn(std::span<const LorentzPoint> batch, double gamma = 1.0, double eps = kBnEpsilon);

// Differentiable normalization with fixed statistics. points: [..., n+1]; gamma: [1].
ad::Var hbn_apply(ad::Var points, const LorentzPoint& mean, double var, ad::Var gamma, double eps, Curvature k);

enum class BnMode {
  kTrain,  // batch stats; update both tracks; normalize with the train track
  kAdapt,  // batch stats; update the test track only; normalize with it
  kEval,   // no updates; normalize with the test track
};

// Domain-specific momentum batch normalization with one learnable scale.
// With domain_specific = false every row shares a single statistics entry.
class DomainBatchNorm {
 public:
  static constexpr int kSharedDomain = -1;

  DomainBatchNorm(std::string name, std::size_t dim, Curvature k, MomentumSchedule schedule, double eps,
                  bool domain_specific);

  // points: [N, n+1]; row_domains has N entries. In kEval, domains without statistics fall
  // back to origin/unit statistics and set *fallback.
  ad::Var forward(ad::Tape& tape, ad::Var points, std::span<const int> row_domains, BnMode mode,
                  bool* fallback = nullptr);

  // Statistics updates of forward() without computing outputs; mode must not be kEval.
  void observe(const Tensor& points, std::span<const int> row_domains, BnMode mode);

  std::vector<Parameter*> parameters() { return {&log_gamma}; }
  std::map<int, DomainStats>& stats() noexcept { return stats_; }
  const std::map<int, DomainStats>& stats() const noexcept { return stats_; }
  bool domain_specific() const noexcept { return domain_specific_; }
  const MomentumSchedule& schedule() const noexcept { return schedule_; }
  double epsilon() const noexcept { return eps_; }
  int key(int domain) const noexcept { return domain_specific_ ? domain : kSharedDomain; }
  // Frozen: kTrain/kAdapt normalize with the stored train/test track and skip updates.
  void set_frozen(bool frozen) noexcept { frozen_ = frozen; }
  bool frozen() const noexcept { return frozen_; }

  Parameter log_gamma;  // [1], gamma = exp(log_gamma)

 private:
  // Updates the tracks of one domain from its rows and returns the statistics to normalize with.
  BatchStats update(int key, const Tensor& rows, BnMode mode);

  std::size_t dim_;
  Curvature k_;
  MomentumSchedule schedule_;
  double eps_;
  bool domain_specific_;
  bool frozen_ = false;
  std::map<int, DomainStats> stats_;
};

// ---- horospherical projections and sliced Wasserstein ----

// (1/sqrt(-K)) log(sqrt(-K) (p_t - <p_s, v>)), zero at the origin for any unit v.
double busemann_project(const LorentzPoint& p, const Vec& direction);

// Mean of |a_(i) - b_(i)|^p after sorting both samples.
double wasserstein_1d(std::span<const double> a, std::span<const double> b, double p);

enum class ReferenceKind {
  kUnitSphere,     // normalized Gaussian directions mapped by exp at the origin
  kWrappedNormal,  // unnormalized Gaussian tangent vectors
};

std::vector<LorentzPoint> sample_reference(std::size_t count, std::size_t dim, Curvature k, std::uint64_t seed,
                                           ReferenceKind kind = ReferenceKind::kUnitSphere);
// Rows of a [count, dim+1] tensor drawn from rng.
Tensor sample_reference_rows(std::size_t count, std::size_t dim, Curvature k, Rng& rng, ReferenceKind kind);

// [dim, slices] matrix of uniformly distributed unit columns.
Tensor sample_directions(std::size_t dim, std::size_t slices, Rng& rng);

struct HhswOptions {
  std::size_t slices = 1000;
  double exponent = 2.0;
  ReferenceKind reference = ReferenceKind::kUnitSphere;
};

// Sum over domains of the sliced W_p^p between each domain's rows of points ([N, n+1])
// and a fresh reference draw of the same size. Directions and references come from rng.
ad::Var hhsw_loss(ad::Var points, std::span<const int> row_domains, const HhswOptions& options, Rng& rng,
                  Curvature k);

// Two-sample estimate between equal-sized point sets; optional per-slice W_p^p values.
double hhsw_estimate(std::span<const LorentzPoint> a, std::span<const LorentzPoint> b, std::size_t slices,
                     double exponent, std::uint64_t seed, std::vector<double>* per_slice = nullptr);

}  // namespace lorentzkit
