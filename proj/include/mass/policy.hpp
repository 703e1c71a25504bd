#pragma once

// Generator objectives: rewards from meta-sensitivities, group-normalized
// advantages, the clipped surrogate, and the solve losses.

#include <span>
#include <vector>

#include "mass/graph.hpp"
#include "mass/model.hpp"
#include "mass/taskgen.hpp"

namespace mass {

struct Rollout {
  std::vector<int> prompt;  // x_i
  std::vector<int> output;  // y_i
  double old_logprob = 0.0;
  bool parsed = false;
  double reward = 0.0;
  double advantage = 0.0;
};

struct RolloutGroup {
  std::vector<Rollout> rollouts;
};

enum class SolveVariant { kGold, kVerifier };

struct GeneratorLossSpec {
  double clip = 0.2;   // epsilon
  double gamma = 0.5;  // weight of the solve loss
  SolveVariant solve = SolveVariant::kVerifier;
};

/// r_i = -sensitivity_i for parsed entries, -penalty otherwise.
std::vector<double> rewards_from_sensitivities(std::span<const double> sensitivities,
                                               std::span<const bool> parsed, double penalty = 1.0);

/// (r - mean) / (population std + 1e-8); all zeros when the rewards do not vary.
std::vector<double> group_advantages(std::span<const double> rewards);

/// Fills rewards and advantages of a group in place.
void assign_advantages(RolloutGroup& group, std::span<const double> rewards);

/// -mean_i min(ratio_i A_i, clip(ratio_i, 1-eps, 1+eps) A_i), ratio_i = exp(logprob_new - old).
template <class S>
ad::Var<S> aux_surrogate(const ModelConfig& cfg, const ParamVars<S>& params, const RolloutGroup& group,
                         double clip) {
  if (group.rollouts.empty()) throw ContractError("aux_surrogate: empty group");
  ad::Var<S> total = ad::scalar<S>(S(0.0));
  double constant_part = 0.0;
  for (const auto& r : group.rollouts) {
    if (r.advantage == 0.0) continue;
    if (r.output.empty()) {
      constant_part += r.advantage;  // ratio is identically 1
      continue;
    }
    const auto lp = logprob(cfg, params, nullptr, continuation(r.prompt, r.output));
    const auto ratio = ad::exp(ad::add_scalar(lp, -r.old_logprob));
    const auto plain = ad::scale(ratio, r.advantage);
    const auto clipped = ad::scale(ad::clamp(ratio, 1.0 - clip, 1.0 + clip), r.advantage);
    total = ad::add(total, ad::minimum(plain, clipped));
  }
  total = ad::add_scalar(total, constant_part);
  return ad::scale(total, -1.0 / static_cast<double>(group.rollouts.size()));
}

/// Cross-entropy on the gold answer under the unadapted model.
template <class S>
ad::Var<S> solve_loss_gold(const ModelConfig& cfg, const ParamVars<S>& params, const Task& task) {
  return nll(cfg, params, nullptr, gold_sequence(task));
}

/// Group of attempts with binary verifier rewards; old log-probs are those of
/// the adapted model that produced the attempts.
RolloutGroup verifier_group(const Task& task, std::span<const Attempt> attempts);

template <class S>
ad::Var<S> solve_loss_verifier(const ModelConfig& cfg, const ParamVars<S>& params, const Task& task,
                               std::span<const Attempt> attempts, double clip) {
  if (attempts.empty()) throw ContractError("solve_loss_verifier: no attempts");
  return aux_surrogate(cfg, params, verifier_group(task, attempts), clip);
}

template <class S>
ad::Var<S> generator_loss(const ad::Var<S>& aux, const ad::Var<S>& solve, double gamma) {
  return ad::add(aux, ad::scale(solve, gamma));
}

}  // namespace mass
