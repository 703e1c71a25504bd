#pragma once

// Affine-modular rule induction tasks: y = (a*x + b) mod M, shown through a few
// demonstrations, plus parsing and verification of model-generated text.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mass/model.hpp"

namespace mass {

struct Rule {
  int a = 1;
  int b = 0;
  int modulus = 7;

  int apply(int x) const { return (a * x + b) % modulus; }
  bool operator==(const Rule&) const = default;
};

struct TaskConfig {
  int min_modulus = 7;
  int max_modulus = 23;
  int demos = 3;

  bool operator==(const TaskConfig&) const = default;
};

struct Task {
  Rule rule;
  std::vector<std::pair<int, int>> demos;
  int query = 0;
  int gold = 0;
  std::string family;
  std::uint64_t seed = 0;
  std::vector<int> prompt;  // rendered; ends with the answer marker

  bool operator==(const Task&) const = default;
};

enum class Split { kTrain, kEval };

/// Eval rules are a fixed hash-selected fifth of all rules.
bool is_eval_rule(const Rule& rule);

/// Family tag: the modulus range split into three bands.
std::string family_of(int modulus, const TaskConfig& cfg);
std::vector<std::string> families(const TaskConfig& cfg);

/// Deterministic in `seed`. Distinct seeds below 17 * 294 give distinct
/// (rule, query) pairs at the default ranges.
Task sample_task(std::uint64_t seed, const TaskConfig& cfg);

/// Builds a task from its fields, filling in gold, family and prompt.
Task make_task(const Rule& rule, std::vector<std::pair<int, int>> demos, int query,
               std::uint64_t seed, const TaskConfig& cfg);

/// `count` tasks whose rules fall in `split`, scanning seeds from `first_seed`.
std::vector<Task> make_task_set(Split split, int count, std::uint64_t first_seed,
                                const TaskConfig& cfg);

/// TASK x -> y ; ... QUERY x* ANSWER
std::vector<int> render(const Task& task);
/// The same demonstrations and an arbitrary query text.
std::vector<int> render_with_query(const Task& task, std::span<const int> query);
/// Generator input: the task followed by the example-start marker.
std::vector<int> generator_prompt(const Task& task);

/// Digits without leading zeros; "0" for all zeros. Empty input stays empty.
std::string normalize_number(const std::string& digits);

struct AuxPair {
  std::string problem;
  std::string answer;

  bool operator==(const AuxPair&) const = default;
};

/// Accepts exactly `EX digits -> digits END` and nothing else.
std::optional<AuxPair> parse_aux(std::span<const int> raw);

struct AuxExample {
  std::vector<int> raw;  // generated tokens including the leading example marker
  bool parsed = false;
  AuxPair pair;
  MaskedSequence train;  // query replaced by the problem; loss on answer and end marker
};

/// Parses generator output for `task`; `raw` starts with the example marker.
AuxExample make_aux_example(const Task& task, std::vector<int> raw);

/// A solved task used directly as a training example.
AuxExample example_from_task(const Task& task);

/// Training sequence for the gold answer to the task's own query.
MaskedSequence gold_sequence(const Task& task);

struct Attempt {
  std::vector<int> response;  // tokens after the answer marker
  std::optional<std::string> answer;
  bool verified = false;
  double logprob = 0.0;  // under the policy that produced it
};

/// Leading digits of a response, which must be followed by the end marker or nothing.
std::optional<std::string> extract_answer(std::span<const int> response);

Attempt make_attempt(const Task& task, std::vector<int> response, double logprob = 0.0);

bool verify(const Task& task, const std::string& attempt_text);
bool verify_tokens(const Task& task, std::span<const int> response);

/// Scorer input: task prompt, separator, problem, separator, answer.
std::vector<int> scorer_input(const Task& task, const AuxExample& example);

}  // namespace mass
