#include "mass/config.hpp"

#include <string>

#include "mass/errors.hpp"
#include "mass/vocab.hpp"

namespace mass {

ModelConfig RunConfig::model() const {
  ModelConfig m;
  m.vocab = vocab().size();
  m.width = width;
  m.blocks = blocks;
  m.heads = heads;
  m.context = context;
  m.ffn_mult = ffn_mult;
  m.lora_rank = lora_rank;
  m.lora_scale = lora_scale;
  return m;
}

ScorerConfig RunConfig::scorer() const {
  ScorerConfig s;
  s.vocab = vocab().size();
  s.width = scorer_width;
  s.heads = scorer_heads;
  s.context = scorer_context;
  s.ffn_mult = scorer_ffn_mult;
  return s;
}

TaskConfig RunConfig::tasks() const { return {min_modulus, max_modulus, demos}; }

InnerConfig RunConfig::inner() const {
  InnerConfig c;
  c.steps = inner_steps;
  c.lr = inner_lr;
  c.block_size = block_size;
  return c;
}

void RunConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ContractError(std::string("config: ") + what);
  };
  require(candidates >= 0 && attempts >= 1 && test_examples >= 0, "counts must be non-negative (attempts >= 1)");
  require(inner_steps >= 0 && inner_lr > 0.0 && block_size >= 1, "inner loop needs steps >= 0, lr > 0, block >= 1");
  require(meta_steps >= 0 && warmup_steps >= 0 && warmup_steps <= meta_steps, "warmup must not exceed meta steps");
  require(meta_batch >= 1, "meta_batch must be positive");
  require(clip > 0.0 && clip < 1.0, "clip must lie in (0, 1)");
  require(gamma >= 0.0 && parse_penalty >= 0.0, "gamma and parse_penalty must be non-negative");
  require(scorer_lr >= 0.0 && generator_lr >= 0.0 && pretrain_lr >= 0.0, "learning rates must be non-negative");
  require(gen_temperature >= 0.0 && attempt_temperature >= 0.0, "temperatures must be non-negative");
  require(max_new_tokens >= 0, "max_new_tokens must be non-negative");
  require(min_modulus >= 2 && max_modulus >= min_modulus + 2, "modulus range needs at least three values");
  require(demos >= 1 && demos < min_modulus, "demos must be fewer than the smallest modulus");
  require(train_tasks >= 0 && eval_tasks >= 0 && pretrain_steps >= 0 && pretrain_batch >= 1, "bad task counts");
  require(width > 0 && heads > 0 && width % heads == 0, "width must be divisible by heads");
  require(scorer_width > 0 && scorer_heads > 0 && scorer_width % scorer_heads == 0,
          "scorer width must be divisible by scorer heads");
  require(blocks >= 1 && lora_rank >= 1 && context >= 16 && scorer_context >= 16, "bad model dimensions");
  require(threads >= 1, "threads must be positive");
}

}  // namespace mass
