#include "mass/policy.hpp"

#include <cmath>

#include "mass/errors.hpp"

namespace mass {

std::vector<double> rewards_from_sensitivities(std::span<const double> sensitivities,
                                               std::span<const bool> parsed, double penalty) {
  if (sensitivities.size() != parsed.size()) throw ContractError("rewards: sensitivities and parse flags misaligned");
  std::vector<double> r(parsed.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = parsed[i] ? -sensitivities[i] : -penalty;
  return r;
}

std::vector<double> group_advantages(std::span<const double> rewards) {
  if (rewards.empty()) throw ContractError("group_advantages: empty group");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> a(rewards.size(), 0.0);
  if (sd == 0.0) return a;
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = (rewards[i] - mean) / (sd + 1e-8);
  return a;
}

void assign_advantages(RolloutGroup& group, std::span<const double> rewards) {
  if (rewards.size() != group.rollouts.size()) throw ContractError("assign_advantages: size mismatch");
  const auto adv = group_advantages(rewards);
  for (std::size_t i = 0; i < adv.size(); ++i) {
    group.rollouts[i].reward = rewards[i];
    group.rollouts[i].advantage = adv[i];
  }
}

RolloutGroup verifier_group(const Task& task, std::span<const Attempt> attempts) {
  RolloutGroup g;
  std::vector<double> rewards;
  for (const auto& a : attempts) {
    g.rollouts.push_back({task.prompt, a.response, a.logprob, true, 0.0, 0.0});
    rewards.push_back(a.verified ? 1.0 : 0.0);
  }
  assign_advantages(g, rewards);
  return g;
}

}  // namespace mass
