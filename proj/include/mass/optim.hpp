#pragma once

#include <cstdint>

#include "mass/param_vector.hpp"

namespace mass {

struct AdamState {
  ParamVector m;
  ParamVector v;
  std::int64_t step = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdamState adam_init(const ParamVector& params);

/// One bias-corrected Adam step, in place.
void adam_step(ParamVector& params, const ParamVector& grad, AdamState& state, const AdamConfig& cfg);

}  // namespace mass
