#pragma once

// Inner-loop adaptation: K steps of plain gradient descent on the
// score-weighted sum of per-example losses, over adapter parameters only.

#include <concepts>
#include <cstddef>
#include <span>
#include <vector>

#include "mass/checkpoint_store.hpp"
#include "mass/derivatives.hpp"
#include "mass/errors.hpp"
#include "mass/model.hpp"

namespace mass {

/// Per-example losses l_i(theta) of one auxiliary batch, generic over the scalar type.
template <class P>
concept InnerProblem = requires(const P& p, const ParamVars<double>& a, const ParamVars<Dual>& b) {
  { p.size() } -> std::convertible_to<std::size_t>;
  { p.example_losses(a) } -> std::same_as<std::vector<ad::Var<double>>>;
  { p.example_losses(b) } -> std::same_as<std::vector<ad::Var<Dual>>>;
};

struct InnerConfig {
  int steps = 2;
  double lr = 0.1;
  bool weighted = true;
  int block_size = 1;  // checkpoint spacing

  bool operator==(const InnerConfig&) const = default;
};

/// sum_i s_i * l_i
template <class S>
ad::Var<S> weighted_sum(std::span<const ad::Var<S>> losses, std::span<const ad::Var<S>> scores) {
  if (losses.size() != scores.size()) throw ContractError("inner_loss: scores and examples misaligned");
  ad::Var<S> total = ad::scalar<S>(S(0.0));
  for (std::size_t i = 0; i < losses.size(); ++i) total = ad::add(total, ad::mul(scores[i], losses[i]));
  return total;
}

template <InnerProblem P, class S>
ad::Var<S> inner_loss(const P& problem, const ParamVars<S>& theta, std::span<const ad::Var<S>> scores) {
  if (scores.size() != problem.size()) throw ContractError("inner_loss: scores and examples misaligned");
  if (scores.empty()) return ad::scalar<S>(S(0.0));
  const auto losses = problem.example_losses(theta);
  return weighted_sum<S>(losses, scores);
}

template <class S>
std::vector<ad::Var<S>> score_constants(std::span<const double> scores) {
  std::vector<ad::Var<S>> out;
  out.reserve(scores.size());
  for (double s : scores) out.push_back(ad::scalar<S>(S(s)));
  return out;
}

template <InnerProblem P>
double inner_loss_value(const P& problem, const ParamVector& theta, std::span<const double> scores) {
  ad::NoGradGuard ng;
  const auto vars = make_constants<double>(theta);
  const auto s = score_constants<double>(scores);
  return inner_loss(problem, vars, std::span<const ad::Var<double>>(s)).item();
}

/// theta_{k+1} = theta_k - lr * grad L_inner(theta_k) with fixed scores.
template <InnerProblem P>
Stepper inner_stepper(const P& problem, std::vector<double> scores, double lr) {
  if (scores.size() != problem.size()) throw ContractError("adapt: scores and examples misaligned");
  return [&problem, scores = std::move(scores), lr](int, const ParamVector& theta) {
    if (scores.empty()) return theta;
    const auto f = [&](const auto& vars) {
      using S = typename std::decay_t<decltype(vars)>::scalar_type;
      const auto s = score_constants<S>(scores);
      return inner_loss(problem, vars, std::span<const ad::Var<S>>(s));
    };
    ParamVector next = theta;
    next.axpy(-lr, grad(f, theta));
    next.check_finite("adapt/state");
    return next;
  };
}

struct AdaptTrajectory {
  ParamVector initial;
  ParamVector final;
  CheckpointStore store;
  std::vector<double> scores;
  int steps = 0;
  double lr = 0.0;
};

/// Runs the inner loop and keeps checkpoints every `block_size` steps. A
/// numeric fault propagates and no trajectory is produced.
template <InnerProblem P>
AdaptTrajectory adapt(const P& problem, const ParamVector& theta0, std::span<const double> scores,
                      const InnerConfig& cfg) {
  if (cfg.steps < 0) throw ContractError("adapt: negative step count");
  if (!(cfg.lr > 0.0)) throw ContractError("adapt: learning rate must be positive");
  AdaptTrajectory tr;
  tr.initial = theta0;
  tr.scores.assign(scores.begin(), scores.end());
  tr.steps = cfg.steps;
  tr.lr = cfg.lr;
  tr.store = CheckpointStore(cfg.steps, cfg.block_size);
  const Stepper step = inner_stepper(problem, tr.scores, cfg.lr);
  ParamVector theta = theta0;
  tr.store.offer(0, theta);
  for (int k = 0; k < cfg.steps; ++k) {
    theta = step(k, theta);
    tr.store.offer(k + 1, theta);
  }
  tr.final = std::move(theta);
  return tr;
}

template <InnerProblem P>
AdaptTrajectory adapt_unweighted(const P& problem, const ParamVector& theta0, const InnerConfig& cfg) {
  const std::vector<double> ones(problem.size(), 1.0);
  return adapt(problem, theta0, ones, cfg);
}

/// The model's adapters trained on a set of masked sequences; base parameters
/// enter only as constants.
struct ModelInnerProblem {
  const ModelConfig* cfg = nullptr;
  const ParamVector* base = nullptr;
  std::vector<MaskedSequence> sequences;

  std::size_t size() const { return sequences.size(); }

  template <class S>
  std::vector<ad::Var<S>> example_losses(const ParamVars<S>& theta) const {
    const auto params = make_constants<S>(*base);
    std::vector<ad::Var<S>> out;
    out.reserve(sequences.size());
    for (const auto& seq : sequences) out.push_back(nll(*cfg, params, &theta, seq));
    return out;
  }
};

}  // namespace mass
