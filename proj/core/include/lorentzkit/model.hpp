#pragma once

// The hybrid EEG network: Euclidean temporal/spatial/depthwise convolutions, a lift to the
// Lorentz model, a Lorentz pointwise convolution, domain-specific batch normalization,
// Lorentz ELU and pooling, concatenation over time and a hyperbolic MLR head.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lorentzkit/alignment.hpp"
#include "lorentzkit/autodiff.hpp"
#include "lorentzkit/layers.hpp"

namespace lorentzkit {

enum class AlignmentMode {
  kFull,     // domain-specific moments + HHSW loss
  kMoments,  // domain-specific moments only
  kNone,     // one shared statistics track, no HHSW
};

enum class HhswSite { kStage1, kPreMlr };

std::string to_string(AlignmentMode m);
std::string to_string(HhswSite s);
std::string to_string(ReferenceKind r);
AlignmentMode parse_alignment(const std::string& s);
HhswSite parse_hhsw_site(const std::string& s);
ReferenceKind parse_reference(const std::string& s);

struct ModelConfig {
  std::size_t channels = 8;
  std::size_t times = 256;
  std::size_t classes = 4;
  double curvature = -1.0;

  std::size_t temporal_filters = 8;
  std::size_t temporal_kernel = 64;
  std::size_t depth_multiplier = 2;
  std::size_t pool1 = 4;
  std::size_t pool2 = 8;
  std::size_t depth_kernel = 16;
  double dropout = 0.25;
  double clamp_norm = kDefaultMaxNorm;
  bool lfc_gated = true;
  double bn_momentum = 0.1;

  AlignmentMode alignment = AlignmentMode::kFull;
  double hhsw_weight = 0.5;
  std::size_t hhsw_slices = 1000;
  double hhsw_exponent = 2.0;
  ReferenceKind reference = ReferenceKind::kUnitSphere;
  HhswSite hhsw_site = HhswSite::kStage1;
  MomentumSchedule schedule;
  double epsilon = kBnEpsilon;

  std::uint64_t seed = 0;

  std::size_t spatial_maps() const { return temporal_filters * depth_multiplier; }
  // Right-padded length: next multiple of pool1 * pool2.
  std::size_t padded_times() const;
  std::size_t stage1_steps() const { return padded_times() / pool1; }
  std::size_t flat_steps() const { return padded_times() / (pool1 * pool2); }
  std::size_t mlr_dim() const { return spatial_maps() * flat_steps(); }
  // Weight actually applied to the HHSW term.
  double effective_hhsw_weight() const { return alignment == AlignmentMode::kFull ? hhsw_weight : 0.0; }

  void validate() const;
};

struct ForwardResult {
  ad::Var logits;             // [B, C]
  ad::Var stage1;             // [B * stage1_steps, n+1], rows grouped by sample
  ad::Var pre_mlr;            // [B, mlr_dim + 1]
  std::vector<int> site_domains;
  bool fallback = false;      // some domain had no statistics in eval mode
};

struct LossParts {
  double cross_entropy = 0.0;
  double hhsw = 0.0;
};

struct EuclideanBnState {
  std::vector<double> mean;
  std::vector<double> var;
};

class HeegnetModel {
  // Declared first: the layer members below draw their initial weights from init_rng_.
  ModelConfig config_;
  Rng init_rng_;

 public:
  explicit HeegnetModel(ModelConfig config);

  // x: [B, P, T]. Dropout draws from rng in kTrain; rng may be null otherwise.
  ForwardResult forward(ad::Tape& tape, const Tensor& x, std::span<const int> domains, BnMode mode, Rng* rng);

  // Cross-entropy plus the weighted HHSW term, always in kTrain mode.
  ad::Var training_loss(ad::Tape& tape, const Tensor& x, std::span<const int> labels, std::span<const int> domains,
                        Rng& rng, LossParts* parts = nullptr);

  // Encoder output before the domain-specific normalization ([B * stage1_steps, n+1]),
  // computed with frozen (eval-mode) Euclidean statistics.
  Tensor pre_alignment_features(const Tensor& x);

  std::vector<Parameter*> parameters();
  const ModelConfig& config() const noexcept { return config_; }
  Curvature curvature() const { return Curvature(config_.curvature); }
  DomainBatchNorm& alignment() noexcept { return dsmdbn; }
  const DomainBatchNorm& alignment() const noexcept { return dsmdbn; }
  EuclideanBnState& bn_state(int which) { return which == 0 ? bn1_state_ : bn2_state_; }
  const EuclideanBnState& bn_state(int which) const { return which == 0 ? bn1_state_ : bn2_state_; }

  Parameter temporal_w;  // [F1, 1, 1, K1]
  Parameter bn1_gamma, bn1_beta;
  Parameter spatial_w;   // [F2, 1, P, 1]
  Parameter bn2_gamma, bn2_beta;
  Parameter depth_w;     // [F2, 1, 1, K3]
  nn::Lfc pointconv;
  DomainBatchNorm dsmdbn;
  nn::Hmlr mlr;

 private:
  ad::Var encode(ad::Tape& tape, const Tensor& x, BnMode mode, Rng* rng);
  ad::Var euclidean_bn(ad::Var h, Parameter& gamma, Parameter& beta, EuclideanBnState& state, BnMode mode);

  EuclideanBnState bn1_state_, bn2_state_;
};

// Repeats each sample's domain once per time site.
std::vector<int> repeat_domains(std::span<const int> domains, std::size_t sites);

}  // namespace lorentzkit
