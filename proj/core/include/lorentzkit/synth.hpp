#pragma once

// Deterministic synthetic data: hierarchical point clouds on the Lorentz model and
// pseudo-EEG epochs with a two-level class tree and per-domain shifts.

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "lorentzkit/dataset.hpp"
#include "lorentzkit/manifold.hpp"

namespace lorentzkit {

struct CloudConfig {
  std::size_t domains = 4;
  std::size_t branching = 2;  // classes = branching^2
  std::size_t per_class = 50;
  std::size_t dim = 8;
  double spread = 0.1;
  double shift = 1.0;
  double parent_radius = 2.0;
  double child_radius = 1.0;
  double curvature = -1.0;
  std::uint64_t seed = 0;
};

struct CloudSet {
  std::vector<LorentzPoint> points;
  std::vector<int> labels;
  std::vector<int> domains;
  std::vector<LorentzPoint> prototypes;      // per class, before any shift
  std::vector<LorentzPoint> domain_offsets;  // p_d, applied as p_d (+) x
};

// Prototypes exp_0(R_p a_i + R_c c_j) with a_i, c_j centered simplex directions on
// orthogonal axes, so their Frechet mean is the origin. Samples are exp at the prototype
// of transported Gaussian tangents, then gyrotranslated per domain.
CloudSet gen_manifold_clouds(const CloudConfig& config);

// Centered, unit-norm simplex directions of `count` vertices placed on axes
// [offset, offset + count) of R^dim.
std::vector<Vec> simplex_directions(std::size_t count, std::size_t dim, std::size_t offset);

struct EpochGenConfig {
  std::size_t domains = 6;
  std::size_t families = 2;
  std::size_t variants = 2;
  std::size_t channels = 8;
  std::size_t times = 256;
  std::size_t per_cell = 40;
  double sampling_rate = 128.0;
  double snr_db = 0.0;          // template power over pink-noise power
  double shift_strength = 0.5;  // 0 = identical domains
  std::uint64_t seed = 0;

  std::size_t classes() const { return families * variants; }
  void validate() const;
  std::string to_json() const;
};

struct ShiftSpec {
  Eigen::MatrixXd mixing;  // P x P, (1-s) I + s Q with Q random orthogonal
  double gain = 1.0;
  double noise_sigma = 0.0;  // extra white noise, relative to the template RMS
  int latency_shift = 0;     // samples; positive delays the response
};

std::vector<ShiftSpec> make_shifts(const EpochGenConfig& config);

// Noiseless, unshifted class templates, each P x T (row-major).
std::vector<Eigen::MatrixXd> class_templates(const EpochGenConfig& config);

EpochDataset gen_epochs(const EpochGenConfig& config);

}  // namespace lorentzkit
