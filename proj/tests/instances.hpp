#pragma once

// Small meta-learning instances on a width-8 model, shared by unit and acceptance tests.

#include <cmath>
#include <string>
#include <vector>

#include "mass/metagrad.hpp"
#include "mass/rng.hpp"
#include "mass/vocab.hpp"

namespace mass::testing {

inline ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.width = 8;
  cfg.blocks = 2;
  cfg.heads = 2;
  cfg.context = 32;
  cfg.ffn_mult = 2;
  cfg.lora_rank = 2;
  cfg.lora_scale = 1.0;
  return cfg;
}

inline ScorerConfig tiny_scorer() {
  ScorerConfig cfg;
  cfg.width = 8;
  cfg.context = 40;
  return cfg;
}

/// Owns everything a ModelMetaProblem points at.
struct MetaInstance {
  ModelConfig cfg = tiny_model();
  ScorerConfig scfg = tiny_scorer();
  ParamVector base;
  ParamVector eta;
  ParamVector theta0;
  Task task;
  ModelMetaProblem problem;

  MetaInstance(std::uint64_t seed, int m) {
    base = init_model(cfg, seed);
    eta = init_scorer(scfg, seed + 1);
    // Larger head weights spread the scores so the scorer path is exercised.
    Rng rng(seed, {77});
    for (double& x : eta.at("head.w").data) x = rng.normal();
    theta0 = init_lora(cfg, seed + 2);
    for (std::size_t i = 0; i < theta0.num_segments(); ++i)
      if (theta0.name(i).ends_with(".B"))
        for (double& x : theta0[i].data) x = 0.2 * rng.normal();
    task = sample_task(seed, TaskConfig{});

    problem.cfg = &cfg;
    problem.base = &base;
    problem.scorer = &scfg;
    problem.task = &task;
    const int modulus = task.rule.modulus;
    for (int i = 0; i < m; ++i) {
      const int x = rng.range(0, modulus - 1);
      const int y = rng.range(0, modulus - 1);
      const std::string text = "EX " + std::to_string(x) + " -> " + std::to_string(y) + " END";
      problem.examples.push_back(make_aux_example(task, vocab().encode(text)));
    }
    problem.targets = {gold_sequence(task)};
  }

  MetaInstance(const MetaInstance&) = delete;
  MetaInstance& operator=(const MetaInstance&) = delete;

  /// Outer loss after adapting with explicit scores, by plain evaluation.
  double outer_after(const std::vector<double>& scores, const InnerConfig& inner) const {
    const auto tr = adapt(problem, theta0, scores, inner);
    ad::NoGradGuard ng;
    return problem.outer_loss(make_constants<double>(tr.final)).item();
  }

  std::vector<double> scores_at(const ParamVector& e) const {
    return score_all(scfg, e, task, std::span<const AuxExample>(problem.examples));
  }
};

/// theta is 1x1; l_i = (theta - c_i)^2 / 2; s_i = sigmoid(eta_i); outer = (theta - 1)^2 / 2.
struct ScalarToy {
  std::vector<double> centers{1.0};
  bool flat_outer = false;

  std::size_t size() const { return centers.size(); }

  template <class S>
  std::vector<ad::Var<S>> example_losses(const ParamVars<S>& theta) const {
    std::vector<ad::Var<S>> out;
    for (double c : centers) {
      const auto d = ad::add_scalar(theta.at("theta"), -c);
      out.push_back(ad::scale(ad::mul(d, d), 0.5));
    }
    return out;
  }

  template <class S>
  std::vector<ad::Var<S>> scores(const ParamVars<S>& eta) const {
    std::vector<ad::Var<S>> out;
    for (std::size_t i = 0; i < centers.size(); ++i)
      out.push_back(ad::sigmoid(ad::slice_cols(eta.at("eta"), static_cast<int>(i), 1)));
    return out;
  }

  template <class S>
  ad::Var<S> outer_loss(const ParamVars<S>& theta) const {
    if (flat_outer) return ad::scalar<S>(S(0.25));
    const auto d = ad::add_scalar(theta.at("theta"), -1.0);
    return ad::scale(ad::mul(d, d), 0.5);
  }

  static ParamVector theta(double v) {
    ParamVector p(make_layout({{"theta", 1, 1}}));
    p.at("theta").data[0] = v;
    return p;
  }

  ParamVector eta(double v) const {
    ParamVector p(make_layout({{"eta", 1, static_cast<int>(centers.size())}}));
    for (double& x : p.at("eta").data) x = v;
    return p;
  }
};

}  // namespace mass::testing
