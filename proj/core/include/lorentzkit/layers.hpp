#pragma once

// Differentiable Lorentz-model operations and layers.
//
// Hyperbolic tensors keep the ambient coordinate on the last axis: a feature map is
// [B, H, W, n+1] with time at index 0. Every op that returns points recomputes the time
// component from the space part, so outputs satisfy <p,p>_L = 1/K to rounding.

#include <string>
#include <vector>

#include "lorentzkit/autodiff.hpp"
#include "lorentzkit/manifold.hpp"
#include "lorentzkit/rng.hpp"

namespace lorentzkit::nn {

using ad::Tape;
using ad::Var;

Var time_part(Var p);   // [..., 1]
Var space_part(Var p);  // [..., n]

// <a,b>_L along the last axis, keeping it: [..., 1].
Var lorentz_inner(Var a, Var b);
// [sqrt(|s|^2 - 1/K), s]
Var lift(Var space, Curvature k);
// Rows with |s| > max_norm are rescaled onto the sphere of radius max_norm.
Var clamp_norm(Var space, double max_norm);
// exp at the origin of the tangent vector [0, s].
Var exp0(Var space, Curvature k);
Var geodesic_distance(Var p, Var q, Curvature k);

Var gyroinverse(Var p);
// Closed-form Lorentz gyroaddition with broadcasting over leading axes.
Var gyroadd(Var p, Var q, Curvature k);
// Closed-form gyromultiplication; t broadcasts against p's leading axes ([..., 1] or scalar).
Var gyroscale(Var t, Var p, Curvature k);

// Space <- ELU(space), time recomputed.
Var lorentz_elu(Var p, Curvature k);
// [..., N, n+1] -> [..., N*n + 1]
Var hcat(Var p, Curvature k);
// Lorentzian centroid over axis -2 of [..., N, n+1]: uniform mean rescaled onto the sheet.
Var lorentz_centroid(Var points, Curvature k);

// Busemann function toward the ideal points of unit directions (columns of dirs, [n, S]).
// p: [m, n+1] -> [m, S]
Var busemann(Var p, const Tensor& dirs, Curvature k);

enum class LfcInputActivation { kIdentity, kElu };

struct LfcOptions {
  LfcInputActivation activation = LfcInputActivation::kIdentity;
  // Gated-direction form lambda*sigmoid(v.p + b') * u/|u|; false uses lift(psi(Wp + b)).
  bool gated = true;
  double init_lambda = 3.0;
};

// Lorentz fully-connected layer L^n -> L^m. lambda = exp(log_lambda) stays positive.
class Lfc {
 public:
  Lfc(std::string name, std::size_t in_dim, std::size_t out_dim, Rng& rng, LfcOptions options = {});

  // p: [..., in_dim + 1] -> [..., out_dim + 1]
  Var forward(Tape& tape, Var p, Curvature k);
  std::vector<Parameter*> parameters();

  std::size_t in_dim() const noexcept { return in_dim_; }
  std::size_t out_dim() const noexcept { return out_dim_; }
  const LfcOptions& options() const noexcept { return options_; }

  Parameter weight;      // [in + 1, out]
  Parameter bias;        // [out]
  Parameter log_lambda;  // [1]
  Parameter gate_v;      // [in + 1]
  Parameter gate_b;      // [1]

 private:
  std::size_t in_dim_;
  std::size_t out_dim_;
  LfcOptions options_;
};

// LFC(HCat(window)) over a [B, H, W, n+1] feature map.
class LorentzConv {
 public:
  LorentzConv(std::string name, std::size_t in_dim, std::size_t out_dim, std::size_t kh, std::size_t kw,
              std::size_t stride, Rng& rng, LfcOptions options = {});

  Var forward(Tape& tape, Var fmap, Curvature k);
  std::vector<Parameter*> parameters() { return lfc_.parameters(); }
  Lfc& lfc() noexcept { return lfc_; }

 private:
  std::size_t kh_, kw_, stride_;
  Lfc lfc_;
};

// Gathers sliding windows of [B, H, W, D] into [B, Ho, Wo, kh*kw, D].
Var extract_windows(Var fmap, std::size_t kh, std::size_t kw, std::size_t sh, std::size_t sw);

Var lorentz_avg_pool(Var fmap, std::size_t kh, std::size_t kw, std::size_t sh, std::size_t sw, Curvature k);

// Forward-only pooling by the iterative Frechet mean of each window, for comparison with
// the centroid. fmap values: [B, H, W, n+1].
Tensor frechet_avg_pool(const Tensor& fmap, std::size_t kh, std::size_t kw, std::size_t sh, std::size_t sw,
                        Curvature k);

// Hyperbolic multinomial logistic regression: signed distances to C hyperplanes.
class Hmlr {
 public:
  Hmlr(std::string name, std::size_t dim, std::size_t classes, Rng& rng);

  // p: [B, dim + 1] -> [B, C]
  Var forward(Tape& tape, Var p, Curvature k);
  std::vector<Parameter*> parameters() { return {&a, &z}; }

  Parameter a;  // [C]
  Parameter z;  // [C, dim]
};

}  // namespace lorentzkit::nn
