#include "lorentzkit/synth.hpp"

#include <Eigen/QR>
#include <cmath>
#include <json.hpp>
#include <numbers>

#include "lorentzkit/error.hpp"
#include "lorentzkit/gyro.hpp"
#include "lorentzkit/rng.hpp"

namespace lorentzkit {

std::vector<Vec> simplex_directions(std::size_t count, std::size_t dim, std::size_t offset) {
  if (count < 2) throw ValidationError("a simplex needs at least 2 vertices");
  if (offset + count > dim) throw ValidationError("simplex does not fit in dimension " + std::to_string(dim));
  std::vector<Vec> out;
  for (std::size_t i = 0; i < count; ++i) {
    Vec v = Vec::Zero(static_cast<Eigen::Index>(dim));
    for (std::size_t j = 0; j < count; ++j) v[static_cast<Eigen::Index>(offset + j)] = -1.0 / static_cast<double>(count);
    v[static_cast<Eigen::Index>(offset + i)] += 1.0;
    out.push_back(v / v.norm());
  }
  return out;
}

CloudSet gen_manifold_clouds(const CloudConfig& c) {
  if (c.branching < 2) throw ValidationError("class tree branching must be >= 2");
  if (c.dim < 2 * c.branching) {
    throw ValidationError("dimension " + std::to_string(c.dim) + " too small for a tree of branching " +
                          std::to_string(c.branching) + " (needs >= " + std::to_string(2 * c.branching) + ")");
  }
  if (c.domains == 0 || c.per_class == 0) throw ValidationError("domains and per_class must be positive");
  if (!(c.spread >= 0.0) || !(c.shift >= 0.0)) throw ValidationError("spread and shift must be >= 0");
  const Curvature k(c.curvature);
  const LorentzPoint origin = LorentzPoint::origin(c.dim, k);
  const auto parents = simplex_directions(c.branching, c.dim, 0);
  const auto children = simplex_directions(c.branching, c.dim, c.branching);

  CloudSet out;
  for (std::size_t i = 0; i < c.branching; ++i) {
    for (std::size_t j = 0; j < c.branching; ++j) {
      const Vec t = c.parent_radius * parents[i] + c.child_radius * children[j];
      out.prototypes.push_back(exp_map(origin, tangent_at_origin(t, k)));
    }
  }
  for (std::size_t d = 0; d < c.domains; ++d) {
    Rng rng(mix_seed(c.seed, 1000 + d));
    Vec u(static_cast<Eigen::Index>(c.dim));
    for (auto& x : u) x = rng.normal();
    u /= u.norm();
    const LorentzPoint pd = exp_map(origin, tangent_at_origin(c.shift * u, k));
    out.domain_offsets.push_back(pd);
    for (std::size_t cls = 0; cls < out.prototypes.size(); ++cls) {
      const LorentzPoint& proto = out.prototypes[cls];
      for (std::size_t s = 0; s < c.per_class; ++s) {
        Vec v(static_cast<Eigen::Index>(c.dim));
        for (auto& x : v) x = c.spread * rng.normal();
        const TangentVector at_proto = parallel_transport(origin, proto, tangent_at_origin(v, k));
        out.points.push_back(gyroadd(pd, exp_map(proto, at_proto)));
        out.labels.push_back(static_cast<int>(cls));
        out.domains.push_back(static_cast<int>(d));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

void EpochGenConfig::validate() const {
  if (domains == 0) throw ValidationError("data.domains must be positive");
  if (families == 0 || variants == 0 || classes() < 2) throw ValidationError("data.families * data.variants must be >= 2");
  if (channels < 2) throw ValidationError("data.channels must be >= 2");
  if (times < 64) throw ValidationError("data.times must be >= 64");
  if (per_cell == 0) throw ValidationError("data.per_cell must be positive");
  if (!(sampling_rate > 0.0)) throw ValidationError("data.sampling_rate must be positive");
  if (!(shift_strength >= 0.0 && shift_strength <= 1.0)) throw ValidationError("data.shift_strength must lie in [0, 1]");
  if (std::isnan(snr_db)) throw ValidationError("data.snr_db must be a number");
}

std::string EpochGenConfig::to_json() const {
  nlohmann::ordered_json j;
  j["generator"] = "pseudo_eeg";
  j["domains"] = domains;
  j["families"] = families;
  j["variants"] = variants;
  j["channels"] = channels;
  j["times"] = times;
  j["per_cell"] = per_cell;
  j["sampling_rate"] = sampling_rate;
  j["snr_db"] = snr_db;
  j["shift_strength"] = shift_strength;
  j["seed"] = seed;
  return j.dump();
}

namespace {

Eigen::MatrixXd random_orthogonal(std::size_t n, Rng& rng) {
  Eigen::MatrixXd g(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  // Sign correction makes Q Haar distributed.
  for (Eigen::Index i = 0; i < q.cols(); ++i) {
    if (r(i, i) < 0.0) q.col(i) = -q.col(i);
  }
  return q;
}

// Unit-RMS 1/f noise from a three-pole approximation of the pink spectrum.
void pink_noise(Rng& rng, double* out, std::size_t n) {
  double b0 = 0.0, b1 = 0.0, b2 = 0.0;
  constexpr std::size_t kBurnIn = 64;
  double sq = 0.0;
  for (std::size_t i = 0; i < n + kBurnIn; ++i) {
    const double w = rng.normal();
    b0 = 0.99765 * b0 + w * 0.0990460;
    b1 = 0.96300 * b1 + w * 0.2965164;
    b2 = 0.57000 * b2 + w * 1.0526913;
    if (i < kBurnIn) continue;
    const double v = b0 + b1 + b2 + w * 0.1848;
    out[i - kBurnIn] = v;
    sq += v * v;
  }
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += out[i];
  mean /= static_cast<double>(n);
  sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] -= mean;
    sq += out[i] * out[i];
  }
  const double scale = sq > 0.0 ? std::sqrt(static_cast<double>(n) / sq) : 0.0;
  for (std::size_t i = 0; i < n; ++i) out[i] *= scale;
}

}  // namespace

std::vector<ShiftSpec> make_shifts(const EpochGenConfig& c) {
  c.validate();
  const double s = c.shift_strength;
  std::vector<ShiftSpec> out;
  for (std::size_t d = 0; d < c.domains; ++d) {
    Rng rng(mix_seed(c.seed, 2000 + d));
    const auto p = static_cast<Eigen::Index>(c.channels);
    ShiftSpec spec;
    spec.mixing = (1.0 - s) * Eigen::MatrixXd::Identity(p, p) + s * random_orthogonal(c.channels, rng);
    spec.gain = std::exp(s * rng.uniform(-std::log(3.0), std::log(3.0)));
    spec.latency_shift = static_cast<int>(std::lround(s * rng.uniform(-1.0, 1.0) * 0.1 * c.sampling_rate));
    spec.noise_sigma = s * rng.uniform(0.0, 0.5);
    out.push_back(std::move(spec));
  }
  return out;
}

std::vector<Eigen::MatrixXd> class_templates(const EpochGenConfig& c) {
  c.validate();
  Rng rng(mix_seed(c.seed, 0x54454d50ULL));
  const auto p = static_cast<Eigen::Index>(c.channels);
  const auto t = static_cast<Eigen::Index>(c.times);
  std::vector<Vec> family_patterns;
  for (std::size_t f = 0; f < c.families; ++f) {
    Vec g(p);
    for (auto& x : g) x = rng.normal();
    family_patterns.push_back(g);
  }
  const double duration = static_cast<double>(c.times) / c.sampling_rate;
  const double center = 0.4 * duration, width = 0.12 * duration;
  std::vector<Eigen::MatrixXd> out;
  for (std::size_t f = 0; f < c.families; ++f) {
    const double freq = 5.0 + 4.0 * static_cast<double>(f);
    for (std::size_t v = 0; v < c.variants; ++v) {
      Vec h(p);
      for (auto& x : h) x = rng.normal();
      Vec w = family_patterns[f] + 0.6 * h;
      w /= w.norm();
      const double phase = std::numbers::pi * static_cast<double>(v) / static_cast<double>(c.variants);
      const double harmonic = 0.6 * static_cast<double>(v) / static_cast<double>(c.variants);
      Eigen::RowVectorXd wave(t);
      for (Eigen::Index i = 0; i < t; ++i) {
        const double time = static_cast<double>(i) / c.sampling_rate;
        const double env = std::exp(-0.5 * std::pow((time - center) / width, 2));
        const double arg = 2.0 * std::numbers::pi * freq * time + phase;
        wave[i] = env * (std::sin(arg) + harmonic * std::sin(2.0 * arg));
      }
      Eigen::MatrixXd tmpl = w * wave;
      // unit mean power per sample
      tmpl *= std::sqrt(static_cast<double>(tmpl.size())) / tmpl.norm();
      out.push_back(std::move(tmpl));
    }
  }
  return out;
}

EpochDataset gen_epochs(const EpochGenConfig& c) {
  c.validate();
  const auto templates = class_templates(c);
  const auto shifts = make_shifts(c);
  const std::size_t classes = c.classes(), pt = c.channels * c.times;
  const double noise_rms = std::pow(10.0, -c.snr_db / 20.0);

  EpochDataset out;
  out.channels = c.channels;
  out.times = c.times;
  out.sampling_rate = c.sampling_rate;
  for (std::size_t f = 0; f < c.families; ++f) {
    for (std::size_t v = 0; v < c.variants; ++v) {
      out.class_names.push_back("family" + std::to_string(f) + "_variant" + std::to_string(v));
    }
  }
  for (std::size_t d = 0; d < c.domains; ++d) out.domain_names.push_back("domain" + std::to_string(d));
  out.generator = c.to_json();
  out.config_hash = fnv1a_hex(out.generator);
  out.epochs.reserve(c.domains * classes * c.per_cell * pt);

  const auto p = static_cast<Eigen::Index>(c.channels);
  const auto t = static_cast<Eigen::Index>(c.times);
  Eigen::MatrixXd signal(p, t), noise(p, t);
  std::vector<double> buf(c.times);
  for (std::size_t d = 0; d < c.domains; ++d) {
    Rng rng(mix_seed(c.seed, 1000 + d));
    const ShiftSpec& sh = shifts[d];
    for (std::size_t cls = 0; cls < classes; ++cls) {
      for (std::size_t i = 0; i < c.per_cell; ++i) {
        const double amp = 1.0 + 0.1 * rng.normal();
        const long lag = static_cast<long>(sh.latency_shift) + std::lround(2.0 * rng.normal());
        signal.setZero();
        for (Eigen::Index j = 0; j < t; ++j) {
          const long src = static_cast<long>(j) - lag;
          if (src >= 0 && src < static_cast<long>(t)) signal.col(j) = amp * templates[cls].col(src);
        }
        for (Eigen::Index ch = 0; ch < p; ++ch) {
          pink_noise(rng, buf.data(), c.times);
          for (Eigen::Index j = 0; j < t; ++j) noise(ch, j) = noise_rms * buf[static_cast<std::size_t>(j)];
        }
        Eigen::MatrixXd x = sh.gain * (sh.mixing * signal + noise);
        for (Eigen::Index ch = 0; ch < p; ++ch) {
          for (Eigen::Index j = 0; j < t; ++j) x(ch, j) += sh.noise_sigma * rng.normal();
        }
        for (Eigen::Index ch = 0; ch < p; ++ch) {
          for (Eigen::Index j = 0; j < t; ++j) out.epochs.push_back(static_cast<float>(x(ch, j)));
        }
        out.labels.push_back(static_cast<int>(cls));
        out.domains.push_back(static_cast<int>(d));
      }
    }
  }
  return out;
}

}  // namespace lorentzkit
