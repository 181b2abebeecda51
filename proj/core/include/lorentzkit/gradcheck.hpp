#pragma once

// Finite-difference verification of every differentiable layer. Each case builds a scalar
// loss sum(f(inputs) * R) with a fixed random R and compares the tape gradients of all
// inputs and parameters against central differences.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lorentzkit/autodiff.hpp"

namespace lorentzkit {

struct GradcheckOptions {
  std::vector<std::uint64_t> seeds{0, 1, 2};
  double tolerance = 1e-4;
  double step = 1e-6;
  // Coordinates checked per parameter tensor; larger tensors are subsampled.
  std::size_t max_coords = 48;
  // Floor of the norm-wise relative error denominator.
  double abs_floor = 1e-8;
  // Per-tensor errors count once a tensor's gradient norm reaches this fraction of the
  // case's; the case-wide norm-wise error always counts.
  double tensor_fraction = 1e-3;
  // Case name (or "*") whose loss passes through an identity node with a negated
  // backward rule. Test fixture for the harness itself.
  std::string inject_sign_flip;
  // Only run cases whose name contains this substring.
  std::string filter;
};

struct GradcheckCase {
  std::string name;
  std::vector<Parameter*> params;
  std::function<ad::Var(ad::Tape&)> loss;
  std::shared_ptr<void> owner;
  // Finite-difference step override (0 = options.step). Sort-based losses are only
  // piecewise smooth, so a smaller step keeps rank swaps out of the stencil.
  double step = 0.0;
};

using GradcheckFactory = std::function<GradcheckCase(std::uint64_t seed)>;

struct GradcheckRow {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t seeds = 0;
  std::size_t coords = 0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GradcheckRow> rows;
  bool all_passed() const;
};

// name -> factory, in report order.
const std::vector<std::pair<std::string, GradcheckFactory>>& gradcheck_registry();

// Norm-wise |g_analytic - g_numeric| / max(|g_analytic|, |g_numeric|, abs_floor) over the
// whole case, and per tensor above tensor_fraction; returns the largest.
double gradcheck_case(GradcheckCase& c, const GradcheckOptions& options, std::uint64_t seed,
                      std::size_t* coords = nullptr);

GradcheckReport run_gradcheck(const GradcheckOptions& options);

}  // namespace lorentzkit
