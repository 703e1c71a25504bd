#pragma once

// Meta-training loop, test-time adaptation, baselines and evaluation.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mass/config.hpp"
#include "mass/policy.hpp"
#include "mass/store.hpp"

namespace mass {

/// Immutable inputs shared by every step of a run.
struct RunContext {
  RunConfig cfg;
  ModelConfig model;
  ScorerConfig scorer;
  TaskConfig tasks;
  std::vector<Task> train_pool;

  explicit RunContext(RunConfig cfg, std::vector<Task> pool = {});
};

std::vector<Task> make_train_pool(const RunConfig& cfg);
std::vector<Task> make_eval_suite(const RunConfig& cfg);

using Progress = std::function<void(const std::string&)>;

/// Supervised warm start of the shared generator/solver on training-split
/// rules: answers in solve format and rule-consistent pairs in example format.
ParamVector pretrain_base(const RunConfig& cfg, const Progress& progress = {});

TrainState init_state(const RunContext& ctx, const ParamVector& base);

enum class TrainMode {
  kMass,        // the five-step bilevel iteration
  kSolverGrpo,  // verifier-rewarded clipped surrogate on direct attempts, no adaptation
};

enum class Event { kGenerate, kScore, kAdapt, kOuter, kScorerUpdate, kGeneratorUpdate };

struct StepEvent {
  int task = -1;  // batch slot; -1 for batch-level updates
  Event event;
};

struct StepResult {
  MetricRecord record;
  std::vector<StepEvent> events;
  bool applied = false;  // false for an empty batch or a rolled-back fault
};

/// Training-pool indices used at `step`.
std::vector<int> batch_for_step(const RunContext& ctx, std::int64_t step);

/// One meta-iteration over `batch` (indices into the training pool). Per task:
/// generate, score, adapt, outer loss; then the pooled scorer update and, past
/// warmup, the pooled generator update. A numeric fault restores parameters
/// and optimizer state; the step counter still advances.
StepResult meta_train_step(const RunContext& ctx, TrainState& state, const std::vector<int>& batch,
                           TrainMode mode = TrainMode::kMass);

/// Runs steps from state.meta_step up to cfg.meta_steps, appending to `log`
/// and checkpointing through `on_step` when given.
void train(const RunContext& ctx, TrainState& state, TrainMode mode, MetricsLog* log,
           const std::function<void(const TrainState&, const MetricRecord&)>& on_step = {});

// ---------------------------------------------------------------- answering

struct AnswerResult {
  std::vector<int> response;
  bool correct = false;
  int generated = 0;
  int parsed = 0;
  bool fallback = false;  // no usable example; answered unadapted
};

/// Greedy answer with optional adapter.
std::vector<int> greedy_answer(const RunContext& ctx, const ParamVector& params, const ParamVector* lora,
                               const Task& task);

/// Generate `n` examples, keep those that parse, unweighted adapter update,
/// greedy answer; the adapter is discarded.
AnswerResult test_time_adapt(const RunContext& ctx, const ParamVector& params, const Task& task,
                             std::uint64_t stream, int n);

/// Adapter update on `n` solved tasks drawn from the training pool.
AnswerResult ttt_adapt(const RunContext& ctx, const ParamVector& params, const Task& task,
                       std::uint64_t stream, int n);

// ---------------------------------------------------------------- evaluation

using Answerer = std::function<AnswerResult(const Task& task, int index)>;

EvalReport evaluate(const RunContext& ctx, const std::string& name, const std::vector<Task>& suite,
                    const Answerer& answer);

inline const std::vector<std::string>& baseline_names() {
  static const std::vector<std::string> names{"base", "ttt", "tt-ss", "solver-grpo", "mass", "mass-gold"};
  return names;
}

/// Config a baseline trains with; mass-gold differs from mass only in the outer variant.
RunConfig baseline_config(const RunConfig& cfg, const std::string& name);

struct BaselineRun {
  EvalReport report;
  std::optional<TrainState> trained;
  std::vector<MetricRecord> metrics;
};

/// Trains when the method requires it, then evaluates on `suite`.
BaselineRun run_baseline(const RunConfig& cfg, const std::string& name, const ParamVector& base,
                         const std::vector<Task>& suite, const Progress& progress = {});

/// Answerer for a method given (possibly trained) parameters.
Answerer answerer_for(const RunContext& ctx, const std::string& name, const ParamVector& params);

struct FamilyGain {
  std::string family;
  double base_accuracy = 0.0;
  double method_accuracy = 0.0;
  double gain = 0.0;
};

struct GainReport {
  std::vector<FamilyGain> families;
  double correlation = 0.0;  // Pearson, base accuracy vs gain; 0 when undefined
};

GainReport family_gains(const EvalReport& base, const EvalReport& method);
std::string gain_table(const GainReport& report, const std::string& method);

}  // namespace mass
