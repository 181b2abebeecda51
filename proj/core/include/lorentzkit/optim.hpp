#pragma once

#include <vector>

#include "lorentzkit/autodiff.hpp"

namespace lorentzkit {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Per-parameter first/second moment buffers and the shared step count.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long step = 0;
};

// One bias-corrected Adam update over params using their accumulated grads.
void adam_step(std::vector<Parameter*>& params, AdamState& state, const AdamOptions& options = {});

void zero_grads(std::vector<Parameter*>& params);

}  // namespace lorentzkit
