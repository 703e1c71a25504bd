#pragma once

// Outer objectives and meta-gradients through the inner loop.
//
// Two backends compute the same quantities: `meta_grad_unroll` keeps the
// differentiable graph of every inner step and backpropagates once;
// `meta_grad_adjoint` carries lambda_k backward through the steps with one
// forward-over-reverse pass per step, replaying states from checkpoints.

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mass/adapt.hpp"
#include "mass/scorer.hpp"
#include "mass/taskgen.hpp"

namespace mass {

/// An inner problem whose weights come from scorer parameters eta and whose
/// quality is judged by an outer loss on the adapted parameters.
template <class P>
concept MetaProblem = InnerProblem<P> && requires(const P& p, const ParamVars<double>& a,
                                                  const ParamVars<Dual>& b) {
  { p.scores(a) } -> std::same_as<std::vector<ad::Var<double>>>;
  { p.scores(b) } -> std::same_as<std::vector<ad::Var<Dual>>>;
  { p.outer_loss(a) } -> std::same_as<ad::Var<double>>;
};

enum class OuterVariant { kGold, kVerified };
enum class Backend { kUnroll, kAdjoint };

std::string_view to_string(OuterVariant v);
std::string_view to_string(Backend b);
OuterVariant parse_outer_variant(std::string_view s);
Backend parse_backend(std::string_view s);

struct OuterLossSpec {
  OuterVariant variant = OuterVariant::kVerified;
  int attempts = 6;
};

/// Sequences the outer loss averages over: the gold answer, or every verified
/// attempt. Empty means the task carries no signal this step.
std::vector<MaskedSequence> outer_targets(const OuterLossSpec& spec, const Task& task,
                                          std::span<const Attempt> attempts);

/// Mean nll over `targets` under base + adapter.
template <class S>
ad::Var<S> outer_loss(const ModelConfig& cfg, const ParamVars<S>& base, const ParamVars<S>& delta,
                      std::span<const MaskedSequence> targets) {
  if (targets.empty()) throw ContractError("outer_loss: no targets");
  ad::Var<S> total = ad::scalar<S>(S(0.0));
  for (const auto& t : targets) total = ad::add(total, nll(cfg, base, &delta, t));
  return ad::scale(total, 1.0 / static_cast<double>(targets.size()));
}

/// Gold variant: nll of the gold answer given the task prompt.
template <class S>
ad::Var<S> outer_loss_gold(const ModelConfig& cfg, const ParamVars<S>& base, const ParamVars<S>& delta,
                           const Task& task) {
  const MaskedSequence seq = gold_sequence(task);
  return outer_loss(cfg, base, delta, std::span<const MaskedSequence>(&seq, 1));
}

/// Verified variant: nullopt when no attempt verified.
template <class S>
std::optional<ad::Var<S>> outer_loss_verified(const ModelConfig& cfg, const ParamVars<S>& base,
                                              const ParamVars<S>& delta, const Task& task,
                                              std::span<const Attempt> attempts) {
  const auto targets = outer_targets({OuterVariant::kVerified, static_cast<int>(attempts.size())}, task, attempts);
  if (targets.empty()) return std::nullopt;
  return outer_loss(cfg, base, delta, std::span<const MaskedSequence>(targets));
}

struct MetaCounters {
  std::int64_t retained_states = 0;  // trajectory states or step graphs held at once
  std::int64_t peak_graph_bytes = 0;
  std::int64_t replayed_steps = 0;
};

struct MetaGrads {
  ParamVector g_eta;
  std::vector<double> sensitivities;
  double outer_loss = 0.0;
  ParamVector adapted;  // theta_K
  MetaCounters counters;
};

namespace detail {

template <class S>
ParamVars<S> step_vars(const ParamVars<S>& theta, std::span<const ad::Var<S>> g, double lr) {
  std::vector<ad::Var<S>> next;
  next.reserve(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) next.push_back(ad::sub(theta[i], ad::scale(g[i], lr)));
  return ParamVars<S>(theta.layout(), std::move(next));
}

inline void check_meta(MetaGrads& r) {
  if (!std::isfinite(r.outer_loss)) throw NumericFault("meta/outer", "non-finite outer loss");
  r.g_eta.check_finite("meta/g_eta");
  for (double s : r.sensitivities)
    if (!std::isfinite(s)) throw NumericFault("meta/sensitivity", "non-finite sensitivity");
}

}  // namespace detail

/// Reverse-over-reverse: the whole K-step graph is kept and differentiated once.
template <MetaProblem P>
MetaGrads meta_grad_unroll(const P& problem, const ParamVector& theta0, const ParamVector& eta,
                           const InnerConfig& cfg) {
  theta0.check_finite("meta/theta0");
  eta.check_finite("meta/eta");
  ad::GradModeGuard on(true);
  ad::reset_peak_bytes();
  const auto bytes0 = ad::graph_counters().live_bytes;

  const auto eta_vars = make_leaves<double>(eta);
  const std::vector<ad::Var<double>> s = problem.scores(eta_vars);
  if (s.size() != problem.size()) throw ContractError("meta_grad: scores and examples misaligned");

  ParamVars<double> theta = make_leaves<double>(theta0);
  for (int k = 0; k < cfg.steps; ++k) {
    if (s.empty()) break;
    const auto loss = inner_loss(problem, theta, std::span<const ad::Var<double>>(s));
    const auto g = ad::gradients(loss, std::span(theta.vars()), /*create_graph=*/true,
                                 /*stop_at_inputs=*/true);
    theta = detail::step_vars<double>(theta, g, cfg.lr);
  }
  const ad::Var<double> out = problem.outer_loss(theta);

  std::vector<ad::Var<double>> inputs = eta_vars.vars();
  inputs.insert(inputs.end(), s.begin(), s.end());
  const auto g = ad::gradients(out, std::span<const ad::Var<double>>(inputs));

  MetaGrads r;
  r.outer_loss = out.item();
  r.g_eta = values_of<double>(eta.layout(), std::span(g.data(), eta_vars.size()));
  for (std::size_t i = 0; i < s.size(); ++i) r.sensitivities.push_back(g[eta_vars.size() + i].item());
  r.adapted = values_of<double>(theta0.layout(), std::span(theta.vars()));
  r.counters.retained_states = s.empty() ? 1 : 2 * cfg.steps + 1;
  r.counters.peak_graph_bytes = ad::graph_counters().peak_bytes - bytes0;
  detail::check_meta(r);
  return r;
}

/// Adjoint recursion with forward-over-reverse second-order terms:
///   lambda_K = grad L_outer(theta_K)
///   g_eta   += -lr * d/d eta <grad_theta L_inner(theta_k, eta), lambda_{k+1}>
///   sens_i  += -lr * <lambda_{k+1}, grad l_i(theta_k)>
///   lambda_k = lambda_{k+1} - lr * H_k lambda_{k+1}
template <MetaProblem P>
MetaGrads meta_grad_adjoint(const P& problem, const ParamVector& theta0, const ParamVector& eta,
                            const InnerConfig& cfg) {
  theta0.check_finite("meta/theta0");
  eta.check_finite("meta/eta");
  ad::GradModeGuard on(true);
  ad::reset_peak_bytes();
  const auto bytes0 = ad::graph_counters().live_bytes;

  std::vector<double> scores;
  {
    ad::NoGradGuard ng;
    for (const auto& v : problem.scores(make_constants<double>(eta))) scores.push_back(v.item());
  }
  const AdaptTrajectory tr = adapt(problem, theta0, scores, cfg);
  const Stepper stepper = inner_stepper(problem, scores, cfg.lr);

  MetaGrads r;
  r.adapted = tr.final;
  r.g_eta = ParamVector(eta.layout());
  r.sensitivities.assign(problem.size(), 0.0);
  ParamVector lambda;
  {
    const auto theta = make_leaves<double>(tr.final);
    const auto out = problem.outer_loss(theta);
    r.outer_loss = out.item();
    lambda = values_of<double>(theta0.layout(), ad::gradients(out, std::span(theta.vars())));
  }

  for (int k = cfg.steps - 1; k >= 0 && !scores.empty(); --k) {
    const ParamVector theta_k = checkpoint_replay(tr.store, k, stepper);
    const auto theta = make_dual_leaves(theta_k, lambda);
    const auto eta_vars = make_dual_leaves(eta, ParamVector(eta.layout()));
    const auto s = problem.scores(eta_vars);
    const auto losses = problem.example_losses(theta);
    const auto loss = weighted_sum<Dual>(losses, s);

    std::vector<ad::Var<Dual>> inputs = theta.vars();
    inputs.insert(inputs.end(), eta_vars.vars().begin(), eta_vars.vars().end());
    const auto g = ad::gradients(loss, std::span<const ad::Var<Dual>>(inputs));
    const std::span<const ad::Var<Dual>> g_theta(g.data(), theta.size());
    const std::span<const ad::Var<Dual>> g_eta(g.data() + theta.size(), eta_vars.size());

    r.g_eta.axpy(-cfg.lr, tangents_of(eta.layout(), g_eta));
    for (std::size_t i = 0; i < losses.size(); ++i) r.sensitivities[i] += -cfg.lr * losses[i].item().t;
    lambda.axpy(-cfg.lr, tangents_of(theta0.layout(), g_theta));
  }

  r.counters.retained_states = static_cast<std::int64_t>(tr.store.num_snapshots());
  r.counters.peak_graph_bytes = ad::graph_counters().peak_bytes - bytes0;
  r.counters.replayed_steps = static_cast<std::int64_t>(tr.store.replayed_steps());
  detail::check_meta(r);
  return r;
}

template <MetaProblem P>
MetaGrads meta_grad(Backend backend, const P& problem, const ParamVector& theta0, const ParamVector& eta,
                    const InnerConfig& cfg) {
  return backend == Backend::kUnroll ? meta_grad_unroll(problem, theta0, eta, cfg)
                                     : meta_grad_adjoint(problem, theta0, eta, cfg);
}

/// K = 1 oracle: sens_i = -lr * <g_outer, grad l_i(theta_0)>.
std::vector<double> sensitivity_closed_form_k1(const ParamVector& g_outer,
                                               std::span<const ParamVector> example_grads, double lr);

/// One task's meta problem on the real model: adapters trained on parsed
/// auxiliary examples, weighted by the scorer, judged by the outer targets.
struct ModelMetaProblem {
  const ModelConfig* cfg = nullptr;
  const ParamVector* base = nullptr;
  const ScorerConfig* scorer = nullptr;
  const Task* task = nullptr;
  std::vector<AuxExample> examples;  // parsed only
  std::vector<MaskedSequence> targets;

  std::size_t size() const { return examples.size(); }

  template <class S>
  std::vector<ad::Var<S>> example_losses(const ParamVars<S>& theta) const {
    const auto params = make_constants<S>(*base);
    std::vector<ad::Var<S>> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) out.push_back(nll(*cfg, params, &theta, ex.train));
    return out;
  }

  template <class S>
  std::vector<ad::Var<S>> scores(const ParamVars<S>& eta) const {
    return score_vars(*scorer, eta, *task, std::span<const AuxExample>(examples));
  }

  template <class S>
  ad::Var<S> outer_loss(const ParamVars<S>& theta) const {
    const auto params = make_constants<S>(*base);
    return mass::outer_loss(*cfg, params, theta, std::span<const MaskedSequence>(targets));
  }
};

}  // namespace mass
