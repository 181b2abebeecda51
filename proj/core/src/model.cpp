#include "lorentzkit/model.hpp"

#include <cmath>

#include "lorentzkit/error.hpp"

namespace lorentzkit {

std::string to_string(AlignmentMode m) {
  switch (m) {
    case AlignmentMode::kFull:
      return "full";
    case AlignmentMode::kMoments:
      return "moments";
    case AlignmentMode::kNone:
      return "none";
  }
  return "full";
}

std::string to_string(HhswSite s) { return s == HhswSite::kStage1 ? "stage1" : "pre_mlr"; }

std::string to_string(ReferenceKind r) { return r == ReferenceKind::kUnitSphere ? "unit_sphere" : "wrapped_normal"; }

AlignmentMode parse_alignment(const std::string& s) {
  if (s == "full") return AlignmentMode::kFull;
  if (s == "moments") return AlignmentMode::kMoments;
  if (s == "none") return AlignmentMode::kNone;
  throw ValidationError("model.alignment must be one of full, moments, none (got '" + s + "')");
}

HhswSite parse_hhsw_site(const std::string& s) {
  if (s == "stage1") return HhswSite::kStage1;
  if (s == "pre_mlr") return HhswSite::kPreMlr;
  throw ValidationError("align.hhsw_site must be stage1 or pre_mlr (got '" + s + "')");
}

ReferenceKind parse_reference(const std::string& s) {
  if (s == "unit_sphere") return ReferenceKind::kUnitSphere;
  if (s == "wrapped_normal") return ReferenceKind::kWrappedNormal;
  throw ValidationError("align.reference must be unit_sphere or wrapped_normal (got '" + s + "')");
}

std::size_t ModelConfig::padded_times() const {
  const std::size_t m = pool1 * pool2;
  return (times + m - 1) / m * m;
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* key) {
    if (v == 0) throw ValidationError(std::string(key) + " must be positive");
  };
  positive(channels, "data.channels");
  positive(times, "data.times");
  positive(temporal_filters, "model.temporal_filters");
  positive(temporal_kernel, "model.temporal_kernel");
  positive(depth_multiplier, "model.depth_multiplier");
  positive(pool1, "model.pool1");
  positive(pool2, "model.pool2");
  positive(depth_kernel, "model.depth_kernel");
  positive(hhsw_slices, "align.hhsw_slices");
  if (classes < 2) throw ValidationError("at least two classes are required");
  if (!(curvature < 0.0) || !std::isfinite(curvature)) throw ValidationError("model.curvature must be negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("model.dropout must lie in [0, 1)");
  if (!(clamp_norm > 0.0)) throw ValidationError("model.clamp_norm must be positive");
  if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) throw ValidationError("train.bn_momentum must lie in (0, 1]");
  if (!(hhsw_weight >= 0.0)) throw ValidationError("align.hhsw_weight must be >= 0");
  if (!(hhsw_exponent >= 1.0)) throw ValidationError("align.exponent must be >= 1");
  if (!(epsilon > 0.0)) throw ValidationError("align.epsilon must be positive");
  schedule.validate();
}

std::vector<int> repeat_domains(std::span<const int> domains, std::size_t sites) {
  std::vector<int> out;
  out.reserve(domains.size() * sites);
  for (int d : domains) out.insert(out.end(), sites, d);
  return out;
}

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.storage()) v = rng.uniform(-bound, bound);
  return t;
}

const ModelConfig& validated(const ModelConfig& c) {
  c.validate();
  return c;
}

}  // namespace

HeegnetModel::HeegnetModel(ModelConfig config)
    : config_(validated(config)),
      init_rng_(mix_seed(config.seed, 0x4d4f44454cULL)),
      pointconv("pointconv", config_.spatial_maps(), config_.spatial_maps(), init_rng_,
                nn::LfcOptions{nn::LfcInputActivation::kIdentity, config_.lfc_gated}),
      dsmdbn("dsmdbn", config_.spatial_maps(), Curvature(config_.curvature), config_.schedule, config_.epsilon,
             config_.alignment != AlignmentMode::kNone),
      mlr("mlr", config_.mlr_dim(), config_.classes, init_rng_) {
  const std::size_t f1 = config_.temporal_filters, f2 = config_.spatial_maps();
  temporal_w = Parameter("temporal.weight", uniform_tensor({f1, 1, 1, config_.temporal_kernel},
                                                           1.0 / std::sqrt(static_cast<double>(config_.temporal_kernel)),
                                                           init_rng_));
  bn1_gamma = Parameter("bn1.gamma", Tensor({f1}, 1.0));
  bn1_beta = Parameter("bn1.beta", Tensor({f1}));
  spatial_w = Parameter("spatial.weight", uniform_tensor({f2, 1, config_.channels, 1},
                                                         1.0 / std::sqrt(static_cast<double>(config_.channels)), init_rng_));
  bn2_gamma = Parameter("bn2.gamma", Tensor({f2}, 1.0));
  bn2_beta = Parameter("bn2.beta", Tensor({f2}));
  depth_w = Parameter("depth.weight", uniform_tensor({f2, 1, 1, config_.depth_kernel},
                                                     1.0 / std::sqrt(static_cast<double>(config_.depth_kernel)), init_rng_));
  bn1_state_ = {std::vector<double>(f1, 0.0), std::vector<double>(f1, 1.0)};
  bn2_state_ = {std::vector<double>(f2, 0.0), std::vector<double>(f2, 1.0)};
}

std::vector<Parameter*> HeegnetModel::parameters() {
  std::vector<Parameter*> out{&temporal_w, &bn1_gamma, &bn1_beta, &spatial_w, &bn2_gamma, &bn2_beta, &depth_w};
  for (auto* p : pointconv.parameters()) out.push_back(p);
  for (auto* p : dsmdbn.parameters()) out.push_back(p);
  for (auto* p : mlr.parameters()) out.push_back(p);
  return out;
}

ad::Var HeegnetModel::euclidean_bn(ad::Var h, Parameter& gamma, Parameter& beta, EuclideanBnState& state,
                                   BnMode mode) {
  ad::Tape& tape = h.tape();
  if (mode != BnMode::kTrain) {
    return ad::batch_norm_eval(h, tape.param(gamma), tape.param(beta), state.mean, state.var, kBnEpsilon);
  }
  std::vector<double> m, v;
  ad::Var out = ad::batch_norm_train(h, tape.param(gamma), tape.param(beta), kBnEpsilon, &m, &v);
  const double mo = config_.bn_momentum;
  for (std::size_t c = 0; c < m.size(); ++c) {
    state.mean[c] = (1.0 - mo) * state.mean[c] + mo * m[c];
    state.var[c] = (1.0 - mo) * state.var[c] + mo * v[c];
  }
  return out;
}

ad::Var HeegnetModel::encode(ad::Tape& tape, const Tensor& x, BnMode mode, Rng* rng) {
  const ModelConfig& c = config_;
  if (x.ndim() != 3 || x.shape()[1] != c.channels || x.shape()[2] != c.times) {
    throw DimensionError("model expects [B, " + std::to_string(c.channels) + ", " + std::to_string(c.times) +
                         "] epochs, got " + shape_str(x.shape()));
  }
  const std::size_t b = x.shape()[0], tp = c.padded_times(), f1 = c.temporal_filters, f2 = c.spatial_maps();
  if (b == 0) throw ValidationError("empty batch");
  Tensor padded(Shape{b, 1, c.channels, tp});
  for (std::size_t r = 0; r < b * c.channels; ++r) {
    std::copy_n(x.data() + r * c.times, c.times, padded.data() + r * tp);
  }
  ad::Var h = tape.constant(std::move(padded));
  h = ad::conv2d(h, tape.param(temporal_w), ad::Conv2dSpec::same(1, c.temporal_kernel));
  h = euclidean_bn(h, bn1_gamma, bn1_beta, bn1_state_, mode);
  ad::Conv2dSpec spatial;
  spatial.groups = f1;
  h = ad::conv2d(h, tape.param(spatial_w), spatial);
  h = euclidean_bn(h, bn2_gamma, bn2_beta, bn2_state_, mode);
  h = ad::elu(h);
  h = ad::avg_pool2d(h, 1, c.pool1, 1, c.pool1);
  if (mode == BnMode::kTrain && rng && c.dropout > 0.0) h = ad::dropout(h, c.dropout, *rng, true);
  h = ad::conv2d(h, tape.param(depth_w), ad::Conv2dSpec::same(1, c.depth_kernel, f2));

  const std::size_t steps = c.stage1_steps();
  h = ad::permute(ad::reshape(h, {b, f2, steps}), {0, 2, 1});
  h = ad::reshape(h, {b * steps, f2});
  const Curvature k(c.curvature);
  h = nn::lift(nn::clamp_norm(h, c.clamp_norm), k);
  return pointconv.forward(tape, h, k);
}

ForwardResult HeegnetModel::forward(ad::Tape& tape, const Tensor& x, std::span<const int> domains, BnMode mode,
                                    Rng* rng) {
  if (x.ndim() == 3 && domains.size() != x.shape()[0]) {
    throw DimensionError("forward: " + std::to_string(domains.size()) + " domain tags for " +
                         std::to_string(x.shape()[0]) + " epochs");
  }
  const ModelConfig& c = config_;
  const Curvature k(c.curvature);
  ForwardResult r;
  ad::Var pre = encode(tape, x, mode, rng);
  const std::size_t b = x.shape()[0], f2 = c.spatial_maps();
  r.site_domains = repeat_domains(domains, c.stage1_steps());
  r.stage1 = dsmdbn.forward(tape, pre, r.site_domains, mode, &r.fallback);
  ad::Var h = nn::lorentz_elu(r.stage1, k);
  h = nn::lorentz_centroid(ad::reshape(h, {b, c.flat_steps(), c.pool2, f2 + 1}), k);
  r.pre_mlr = nn::hcat(h, k);
  r.logits = mlr.forward(tape, r.pre_mlr, k);
  return r;
}

ad::Var HeegnetModel::training_loss(ad::Tape& tape, const Tensor& x, std::span<const int> labels,
                                    std::span<const int> domains, Rng& rng, LossParts* parts) {
  ForwardResult r = forward(tape, x, domains, BnMode::kTrain, &rng);
  ad::Var loss = ad::softmax_cross_entropy(r.logits, labels);
  if (parts) *parts = {loss.value().item(), 0.0};
  const double w = config_.effective_hhsw_weight();
  if (w > 0.0) {
    HhswOptions opt{config_.hhsw_slices, config_.hhsw_exponent, config_.reference};
    const Curvature k(config_.curvature);
    ad::Var h = config_.hhsw_site == HhswSite::kStage1 ? hhsw_loss(r.stage1, r.site_domains, opt, rng, k)
                                                        : hhsw_loss(r.pre_mlr, domains, opt, rng, k);
    if (parts) parts->hhsw = h.value().item();
    loss = loss + h * w;
  }
  return loss;
}

Tensor HeegnetModel::pre_alignment_features(const Tensor& x) {
  ad::Tape tape;
  return encode(tape, x, BnMode::kEval, nullptr).value();
}

}  // namespace lorentzkit
