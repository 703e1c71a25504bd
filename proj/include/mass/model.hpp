#pragma once

// Tiny causal transformer used as both generator and solver, with low-rank
// adapters on the attention projections.

#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "mass/graph.hpp"
#include "mass/param_vector.hpp"

namespace mass {

struct ModelConfig {
  int vocab = 24;
  int width = 32;
  int blocks = 2;
  int heads = 2;
  int context = 128;
  int ffn_mult = 4;
  int lora_rank = 4;
  double lora_scale = 0.5;  // c = 2 / r

  bool operator==(const ModelConfig&) const = default;
};

/// A token sequence with a per-token target mask. mask[t] = 1 means token t is
/// predicted from tokens[0..t) and contributes to the loss; mask[0] is ignored.
struct MaskedSequence {
  std::vector<int> tokens;
  std::vector<std::uint8_t> mask;

  int active() const;
};

/// Prompt followed by a continuation whose every token is a target.
MaskedSequence continuation(std::span<const int> prompt, std::span<const int> completion);

LayoutPtr model_layout(const ModelConfig& cfg);
LayoutPtr lora_layout(const ModelConfig& cfg);

/// Names of the weight matrices that carry adapters.
std::vector<std::string> adapted_matrices(const ModelConfig& cfg);
/// Names of every non-adapter model segment.
std::vector<std::string> model_segment_names(const ModelConfig& cfg);

ParamVector init_model(const ModelConfig& cfg, std::uint64_t seed);
/// Down-projections random, up-projections zero: the initial delta is exactly zero.
ParamVector init_lora(const ModelConfig& cfg, std::uint64_t seed);

/// Logits (T x V) for every position of `tokens`.
template <class S>
ad::Var<S> forward_logits(const ModelConfig& cfg, const ParamVars<S>& params,
                          const std::type_identity_t<ParamVars<S>>* lora, std::span<const int> tokens);

/// Mean per-token cross-entropy over masked positions.
template <class S>
ad::Var<S> nll(const ModelConfig& cfg, const ParamVars<S>& params, const std::type_identity_t<ParamVars<S>>* lora,
               const MaskedSequence& seq);

/// Summed log-probability over masked positions.
template <class S>
ad::Var<S> logprob(const ModelConfig& cfg, const ParamVars<S>& params, const std::type_identity_t<ParamVars<S>>* lora,
                   const MaskedSequence& seq);

double nll_value(const ModelConfig& cfg, const ParamVector& params, const ParamVector* lora,
                 const MaskedSequence& seq);
double logprob_value(const ModelConfig& cfg, const ParamVector& params, const ParamVector* lora,
                     const MaskedSequence& seq);

/// Parameters with every adapted W replaced by W + c * B * A.
ParamVector lora_merge(const ModelConfig& cfg, const ParamVector& params, const ParamVector& lora);

struct SamplerConfig {
  double temperature = 1.0;  // 0 selects greedy argmax
  int max_new_tokens = 8;
  std::uint64_t seed = 0;
};

struct Sample {
  std::vector<int> tokens;  // continuation only; ends with the end marker unless truncated
  bool truncated = false;
  double logprob = 0.0;  // under the untempered policy, summed over `tokens`
};

/// Autoregressive continuation of `prompt`, deterministic given the seed.
Sample sample(const ModelConfig& cfg, const ParamVector& params, const ParamVector* lora,
              std::span<const int> prompt, const SamplerConfig& sampler);

/// As `sample`, reusing already-lifted parameters.
Sample sample(const ModelConfig& cfg, const ParamVars<double>& params,
              const ParamVars<double>* lora, std::span<const int> prompt,
              const SamplerConfig& sampler);

}  // namespace mass
