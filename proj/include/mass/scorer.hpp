#pragma once

// Relevance scorer: a one-block bidirectional encoder over
// [task prompt | problem | answer], mean-pooled, linear head, sigmoid.

#include <cstdint>
#include <span>
#include <vector>

#include "mass/graph.hpp"
#include "mass/param_vector.hpp"
#include "mass/taskgen.hpp"

namespace mass {

struct ScorerConfig {
  int vocab = 24;
  int width = 16;
  int heads = 1;
  int context = 64;
  int ffn_mult = 2;

  bool operator==(const ScorerConfig&) const = default;
};

LayoutPtr scorer_layout(const ScorerConfig& cfg);
ParamVector init_scorer(const ScorerConfig& cfg, std::uint64_t seed);

/// Score of one encoded scorer input, as a 1x1 variable in (0, 1).
template <class S>
ad::Var<S> score_tokens(const ScorerConfig& cfg, const ParamVars<S>& eta, std::span<const int> ids);

template <class S>
ad::Var<S> score(const ScorerConfig& cfg, const ParamVars<S>& eta, const Task& task,
                 const AuxExample& example) {
  return score_tokens(cfg, eta, scorer_input(task, example));
}

/// One variable per example, order preserved.
template <class S>
std::vector<ad::Var<S>> score_vars(const ScorerConfig& cfg, const ParamVars<S>& eta, const Task& task,
                                   std::span<const AuxExample> examples) {
  std::vector<ad::Var<S>> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(score(cfg, eta, task, ex));
  return out;
}

using ScoreVector = std::vector<double>;

ScoreVector score_all(const ScorerConfig& cfg, const ParamVector& eta, const Task& task,
                      std::span<const AuxExample> examples);

}  // namespace mass
