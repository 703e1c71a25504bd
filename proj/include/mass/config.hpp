#pragma once

#include <cstdint>

#include "mass/adapt.hpp"
#include "mass/metagrad.hpp"
#include "mass/model.hpp"
#include "mass/scorer.hpp"
#include "mass/taskgen.hpp"

namespace mass {

/// Every knob of a run. Serialized as flat `key = value` text by the store.
struct RunConfig {
  // Meta-training.
  int candidates = 12;  // m generated examples per task
  int attempts = 6;     // k solution attempts for the verified outer loss
  int inner_steps = 2;
  double inner_lr = 0.1;
  int block_size = 1;
  int meta_steps = 100;
  int warmup_steps = 20;
  int meta_batch = 4;
  OuterVariant outer = OuterVariant::kVerified;
  Backend backend = Backend::kAdjoint;
  double gamma = 0.5;
  double clip = 0.2;
  double parse_penalty = 1.0;
  double scorer_lr = 1e-2;
  double generator_lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  // Sampling.
  double gen_temperature = 0.8;
  double attempt_temperature = 1.0;
  int max_new_tokens = 8;

  // Test time.
  int test_examples = 6;

  // Base-model pretraining.
  int pretrain_steps = 3000;
  int pretrain_batch = 8;
  double pretrain_lr = 3e-3;

  // Tasks.
  int min_modulus = 7;
  int max_modulus = 23;
  int demos = 3;
  int train_tasks = 500;
  int eval_tasks = 200;
  std::uint64_t train_seed_offset = 0;
  std::uint64_t eval_seed_offset = 0;

  // Model and scorer.
  int width = 32;
  int blocks = 2;
  int heads = 2;
  int context = 128;
  int ffn_mult = 4;
  int lora_rank = 4;
  double lora_scale = 0.5;
  int scorer_width = 16;
  int scorer_heads = 1;
  int scorer_context = 64;
  int scorer_ffn_mult = 2;

  std::uint64_t seed = 1;
  int threads = 1;

  bool operator==(const RunConfig&) const = default;

  ModelConfig model() const;
  ScorerConfig scorer() const;
  TaskConfig tasks() const;
  InnerConfig inner() const;
  OuterLossSpec outer_spec() const { return {outer, attempts}; }

  /// Throws ContractError naming the first violated constraint.
  void validate() const;
};

}  // namespace mass
