#include "mass/optim.hpp"

#include <cmath>

#include "mass/errors.hpp"

namespace mass {

AdamState adam_init(const ParamVector& params) {
  return {ParamVector(params.layout()), ParamVector(params.layout()), 0};
}

void adam_step(ParamVector& params, const ParamVector& grad, AdamState& state, const AdamConfig& cfg) {
  if (!params.same_layout(grad) || !params.same_layout(state.m)) throw ContractError("adam_step: layout mismatch");
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t s = 0; s < params.num_segments(); ++s) {
    auto& p = params[s].data;
    const auto& g = grad[s].data;
    auto& m = state.m[s].data;
    auto& v = state.v[s].data;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      p[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
    }
  }
}

}  // namespace mass
