#include "mass/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <memory>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "mass/errors.hpp"
#include "mass/metagrad.hpp"
#include "mass/parallel.hpp"
#include "mass/rng.hpp"
#include "mass/vocab.hpp"

namespace mass {

namespace {

// Stream sub-ids below a purpose, kept apart from per-index paths.
constexpr std::uint64_t kAdapterInit = 1ULL << 40;

std::vector<int> with_example_marker(const std::vector<int>& tokens) {
  std::vector<int> raw{Vocab::kExample};
  raw.insert(raw.end(), tokens.begin(), tokens.end());
  return raw;
}

MaskedSequence example_sequence(const Task& task, int problem) {
  std::vector<int> completion = number_tokens(problem);
  completion.push_back(Vocab::kArrow);
  const auto answer = number_tokens(task.rule.apply(problem));
  completion.insert(completion.end(), answer.begin(), answer.end());
  completion.push_back(Vocab::kEnd);
  return continuation(generator_prompt(task), completion);
}

/// Sum of per-sequence gradients of the mean nll, reduced in index order.
ParamVector batch_gradient(const ModelConfig& model, const ParamVector& params,
                           const std::vector<MaskedSequence>& batch, int threads, double& loss) {
  std::vector<ValueAndGrad> parts(batch.size());
  parallel_for(static_cast<int>(batch.size()), threads, [&](int i) {
    parts[i] = value_and_grad([&](const auto& v) { return nll(model, v, nullptr, batch[i]); }, params);
  });
  ParamVector g(params.layout());
  loss = 0.0;
  const double w = 1.0 / static_cast<double>(batch.size());
  for (const auto& p : parts) {
    g.axpy(w, p.grad);
    loss += w * p.value;
  }
  return g;
}

struct TaskOutcome {
  std::vector<Event> events;
  int generated = 0;
  int parsed = 0;
  std::vector<double> scores;
  int attempts = 0;
  int verified = 0;
  bool signal = false;
  std::optional<MetaGrads> meta;
  std::vector<double> rewards;
  bool has_generator_grad = false;
  ParamVector generator_grad;
  double aux_loss = 0.0;
  double solve_loss = 0.0;
};

std::vector<Attempt> sample_attempts(const RunContext& ctx, const ParamVars<double>& params,
                                     const ParamVars<double>* lora, const Task& task, std::int64_t step,
                                     int slot) {
  std::vector<Attempt> out;
  for (int j = 0; j < ctx.cfg.attempts; ++j) {
    SamplerConfig s{ctx.cfg.attempt_temperature, ctx.cfg.max_new_tokens,
                    derive_seed(ctx.cfg.seed, {id(Stream::kAttempt), static_cast<std::uint64_t>(step),
                                               static_cast<std::uint64_t>(slot), static_cast<std::uint64_t>(j)})};
    Sample smp = sample(ctx.model, params, lora, task.prompt, s);
    out.push_back(make_attempt(task, std::move(smp.tokens), smp.logprob));
  }
  return out;
}

TaskOutcome process_task(const RunContext& ctx, const TrainState& state, const Task& task, int slot,
                         TrainMode mode, bool update_generator) {
  const RunConfig& cfg = ctx.cfg;
  const auto step = static_cast<std::uint64_t>(state.meta_step);
  TaskOutcome out;
  const auto gen = make_constants<double>(state.generator);

  if (mode == TrainMode::kSolverGrpo) {
    const auto attempts = sample_attempts(ctx, gen, nullptr, task, state.meta_step, slot);
    out.attempts = static_cast<int>(attempts.size());
    for (const auto& a : attempts) out.verified += a.verified ? 1 : 0;
    out.events.push_back(Event::kOuter);
    const auto vg = value_and_grad(
        [&](const auto& v) { return solve_loss_verifier(ctx.model, v, task, std::span(attempts), cfg.clip); },
        state.generator);
    out.solve_loss = vg.value;
    out.generator_grad = vg.grad;
    out.has_generator_grad = true;
    return out;
  }

  // (1) Generate candidate examples from the unadapted generator.
  RolloutGroup group;
  std::vector<AuxExample> parsed;
  std::vector<std::size_t> parsed_index;
  const auto prompt = generator_prompt(task);
  for (int i = 0; i < cfg.candidates; ++i) {
    SamplerConfig s{cfg.gen_temperature, cfg.max_new_tokens,
                    derive_seed(cfg.seed, {id(Stream::kGenerate), step, static_cast<std::uint64_t>(slot),
                                           static_cast<std::uint64_t>(i)})};
    Sample smp = sample(ctx.model, gen, nullptr, prompt, s);
    AuxExample ex = make_aux_example(task, with_example_marker(smp.tokens));
    group.rollouts.push_back({prompt, smp.tokens, smp.logprob, ex.parsed, 0.0, 0.0});
    if (ex.parsed) {
      parsed_index.push_back(group.rollouts.size() - 1);
      parsed.push_back(std::move(ex));
    }
  }
  out.generated = cfg.candidates;
  out.parsed = static_cast<int>(parsed.size());
  out.events.push_back(Event::kGenerate);

  // (2) Score.
  out.scores = score_all(ctx.scorer, state.scorer, task, std::span<const AuxExample>(parsed));
  out.events.push_back(Event::kScore);

  // (3) Adapt on the weighted examples.
  ModelMetaProblem problem;
  problem.cfg = &ctx.model;
  problem.base = &state.generator;
  problem.scorer = &ctx.scorer;
  problem.task = &task;
  problem.examples = std::move(parsed);
  const ParamVector theta0 =
      init_lora(ctx.model, derive_seed(cfg.seed, {id(Stream::kLoraInit), step, static_cast<std::uint64_t>(slot)}));
  const InnerConfig inner = cfg.inner();
  const AdaptTrajectory tr = adapt(problem, theta0, out.scores, inner);
  out.events.push_back(Event::kAdapt);

  // (4) Outer loss on the task with the adapted model.
  std::vector<Attempt> attempts;
  if (cfg.outer == OuterVariant::kVerified) {
    const auto adapted = make_constants<double>(tr.final);
    attempts = sample_attempts(ctx, gen, &adapted, task, state.meta_step, slot);
    out.attempts = static_cast<int>(attempts.size());
    for (const auto& a : attempts) out.verified += a.verified ? 1 : 0;
  }
  problem.targets = outer_targets(cfg.outer_spec(), task, attempts);
  out.signal = !problem.targets.empty();
  if (out.signal) out.meta = meta_grad(cfg.backend, problem, theta0, state.scorer, inner);
  out.events.push_back(Event::kOuter);

  // Rewards for the generator's candidates.
  const bool has_aux = out.signal;
  if (has_aux) {
    std::vector<double> sens(group.rollouts.size(), 0.0);
    const auto ok = std::make_unique<bool[]>(group.rollouts.size());
    for (std::size_t j = 0; j < parsed_index.size(); ++j) sens[parsed_index[j]] = out.meta->sensitivities[j];
    for (std::size_t i = 0; i < group.rollouts.size(); ++i) ok[i] = group.rollouts[i].parsed;
    out.rewards = rewards_from_sensitivities(sens, std::span<const bool>(ok.get(), group.rollouts.size()), cfg.parse_penalty);
    if (!out.rewards.empty()) assign_advantages(group, out.rewards);
  }

  if (update_generator) {
    double aux_v = 0.0, solve_v = 0.0;
    const auto vg = value_and_grad(
        [&](const auto& v) {
          using S = typename std::decay_t<decltype(v)>::scalar_type;
          ad::Var<S> aux = ad::scalar<S>(S(0.0));
          if (has_aux && !group.rollouts.empty()) aux = aux_surrogate(ctx.model, v, group, cfg.clip);
          const ad::Var<S> solve = cfg.outer == OuterVariant::kGold
                                       ? solve_loss_gold(ctx.model, v, task)
                                       : solve_loss_verifier(ctx.model, v, task, std::span(attempts), cfg.clip);
          aux_v = primal(aux.item());
          solve_v = primal(solve.item());
          return generator_loss(aux, solve, cfg.gamma);
        },
        state.generator);
    out.aux_loss = aux_v;
    out.solve_loss = solve_v;
    out.generator_grad = vg.grad;
    out.has_generator_grad = true;
  }
  return out;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  if (x.size() < 2) return 0.0;
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

// ---------------------------------------------------------------- setup

RunContext::RunContext(RunConfig c, std::vector<Task> pool)
    : cfg(std::move(c)), model(cfg.model()), scorer(cfg.scorer()), tasks(cfg.tasks()), train_pool(std::move(pool)) {
  cfg.validate();
  if (train_pool.empty()) train_pool = make_train_pool(cfg);
}

std::vector<Task> make_train_pool(const RunConfig& cfg) {
  return make_task_set(Split::kTrain, cfg.train_tasks, cfg.train_seed_offset, cfg.tasks());
}

std::vector<Task> make_eval_suite(const RunConfig& cfg) {
  return make_task_set(Split::kEval, cfg.eval_tasks, cfg.eval_seed_offset, cfg.tasks());
}

ParamVector pretrain_base(const RunConfig& cfg, const Progress& progress) {
  cfg.validate();
  const ModelConfig model = cfg.model();
  const TaskConfig tasks = cfg.tasks();
  ParamVector params = init_model(model, derive_seed(cfg.seed, {id(Stream::kInit)}));
  AdamState adam = adam_init(params);
  Rng rng(cfg.seed, {id(Stream::kPretrain)});
  double smoothed = 0.0;
  for (int step = 0; step < cfg.pretrain_steps; ++step) {
    std::vector<MaskedSequence> batch;
    for (int b = 0; b < cfg.pretrain_batch; ++b) {
      Task t;
      do {
        t = sample_task(rng.next(), tasks);
      } while (is_eval_rule(t.rule));
      if (rng.uniform() < 0.5) {
        batch.push_back(gold_sequence(t));
      } else {
        batch.push_back(example_sequence(t, rng.range(0, t.rule.modulus - 1)));
      }
    }
    double loss = 0.0;
    const ParamVector g = batch_gradient(model, params, batch, cfg.threads, loss);
    const double decay = 1.0 - 0.9 * static_cast<double>(step) / std::max(1, cfg.pretrain_steps);
    adam_step(params, g, adam, {cfg.pretrain_lr * decay, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps});
    smoothed = step == 0 ? loss : 0.98 * smoothed + 0.02 * loss;
    if (progress && (step + 1) % 500 == 0)
      progress(fmt::format("pretrain step {}/{} loss {:.4f}", step + 1, cfg.pretrain_steps, smoothed));
  }
  params.check_finite("pretrain");
  return params;
}

TrainState init_state(const RunContext& ctx, const ParamVector& base) {
  TrainState s;
  s.generator = base;
  s.scorer = init_scorer(ctx.scorer, derive_seed(ctx.cfg.seed, {id(Stream::kInit), 2}));
  s.adam = adam_init(base);
  s.meta_step = 0;
  s.seed = ctx.cfg.seed;
  return s;
}

std::vector<int> batch_for_step(const RunContext& ctx, std::int64_t step) {
  const int n = static_cast<int>(ctx.train_pool.size());
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  const int take = std::min(n, ctx.cfg.meta_batch);
  Rng rng(ctx.cfg.seed, {id(Stream::kBatch), static_cast<std::uint64_t>(step)});
  for (int i = 0; i < take; ++i) std::swap(idx[i], idx[rng.range(i, n - 1)]);
  idx.resize(take);
  return idx;
}

// ---------------------------------------------------------------- training

StepResult meta_train_step(const RunContext& ctx, TrainState& state, const std::vector<int>& batch,
                           TrainMode mode) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig& cfg = ctx.cfg;
  StepResult res;
  res.record.step = state.meta_step;
  if (batch.empty()) {
    spdlog::warn("meta step {}: empty task batch, nothing to do", state.meta_step);
    res.record.fault = "empty batch";
    return res;
  }
  const bool update_generator = mode == TrainMode::kSolverGrpo || state.meta_step >= cfg.warmup_steps;

  const TrainState before = state;
  try {
    std::vector<TaskOutcome> outcomes(batch.size());
    parallel_for(static_cast<int>(batch.size()), cfg.threads, [&](int slot) {
      outcomes[slot] = process_task(ctx, state, ctx.train_pool.at(batch[slot]), slot, mode, update_generator);
    });

    MetricRecord& rec = res.record;
    int generated = 0, parsed = 0, attempts = 0, verified = 0, signal = 0, n_scores = 0, n_rewards = 0;
    double score_sum = 0.0, reward_sum = 0.0;
    ParamVector g_eta(state.scorer.layout());
    ParamVector g_gen(state.generator.layout());
    for (std::size_t slot = 0; slot < outcomes.size(); ++slot) {
      const TaskOutcome& o = outcomes[slot];
      for (Event e : o.events) res.events.push_back({static_cast<int>(slot), e});
      rec.task_seeds.push_back(ctx.train_pool[batch[slot]].seed);
      generated += o.generated;
      parsed += o.parsed;
      attempts += o.attempts;
      verified += o.verified;
      for (double s : o.scores) {
        score_sum += s;
        rec.max_score = std::max(rec.max_score, s);
        ++n_scores;
      }
      for (double r : o.rewards) {
        reward_sum += r;
        ++n_rewards;
      }
      if (o.meta) {
        ++signal;
        g_eta += o.meta->g_eta;
        rec.outer_losses.push_back(o.meta->outer_loss);
        rec.retained_states = std::max(rec.retained_states, o.meta->counters.retained_states);
        rec.peak_graph_bytes = std::max(rec.peak_graph_bytes, o.meta->counters.peak_graph_bytes);
      } else {
        rec.outer_losses.push_back(std::nullopt);
        if (mode == TrainMode::kMass && o.attempts > 0 && o.verified == 0) ++rec.zero_verified_skips;
      }
      if (o.has_generator_grad) {
        g_gen.axpy(1.0 / static_cast<double>(outcomes.size()), o.generator_grad);
        rec.aux_loss += o.aux_loss / static_cast<double>(outcomes.size());
        rec.solve_loss += o.solve_loss / static_cast<double>(outcomes.size());
      }
    }
    rec.parse_rate = generated == 0 ? 0.0 : static_cast<double>(parsed) / generated;
    rec.verified_rate = attempts == 0 ? 0.0 : static_cast<double>(verified) / attempts;
    rec.mean_score = n_scores == 0 ? 0.0 : score_sum / n_scores;
    rec.mean_reward = n_rewards == 0 ? 0.0 : reward_sum / n_rewards;
    rec.generator_loss = rec.aux_loss + (mode == TrainMode::kMass ? cfg.gamma : 1.0) * rec.solve_loss;

    // (5) Scorer update from the mean meta-gradient, then the generator.
    if (mode == TrainMode::kMass) {
      if (signal > 0) {
        g_eta *= 1.0 / signal;
        rec.scorer_grad_norm = g_eta.norm();
        state.scorer.axpy(-cfg.scorer_lr, g_eta);
        state.scorer.check_finite("scorer update");
      }
      res.events.push_back({-1, Event::kScorerUpdate});
    }
    if (update_generator) {
      g_gen.check_finite("generator gradient");
      adam_step(state.generator, g_gen, state.adam,
                {cfg.generator_lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps});
      state.generator.check_finite("generator update");
      rec.generator_updated = true;
      res.events.push_back({-1, Event::kGeneratorUpdate});
    }
    res.applied = true;
  } catch (const NumericFault& e) {
    const std::int64_t step = state.meta_step;
    state = before;
    res.record = MetricRecord{};
    res.record.step = step;
    res.record.fault = e.what();
    res.events.clear();
    spdlog::error("meta step {}: {}; step rolled back", step, e.what());
  }
  state.meta_step += 1;
  res.record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

void train(const RunContext& ctx, TrainState& state, TrainMode mode, MetricsLog* log,
           const std::function<void(const TrainState&, const MetricRecord&)>& on_step) {
  while (state.meta_step < ctx.cfg.meta_steps) {
    const auto batch = batch_for_step(ctx, state.meta_step);
    const StepResult r = meta_train_step(ctx, state, batch, mode);
    if (log) log->append(r.record);
    if (on_step) on_step(state, r.record);
  }
}

// ---------------------------------------------------------------- answering

std::vector<int> greedy_answer(const RunContext& ctx, const ParamVector& params, const ParamVector* lora,
                               const Task& task) {
  return sample(ctx.model, params, lora, task.prompt, {0.0, ctx.cfg.max_new_tokens, 0}).tokens;
}

namespace {

AnswerResult adapt_and_answer(const RunContext& ctx, const ParamVector& params, const Task& task,
                              const ModelInnerProblem& problem, std::uint64_t lora_seed) {
  AnswerResult r;
  if (problem.sequences.empty()) {
    r.response = greedy_answer(ctx, params, nullptr, task);
  } else {
    const ParamVector theta0 = init_lora(ctx.model, lora_seed);
    const AdaptTrajectory tr = adapt_unweighted(problem, theta0, ctx.cfg.inner());
    r.response = greedy_answer(ctx, params, &tr.final, task);
  }
  r.correct = verify_tokens(task, r.response);
  return r;
}

}  // namespace

AnswerResult test_time_adapt(const RunContext& ctx, const ParamVector& params, const Task& task,
                             std::uint64_t stream, int n) {
  const auto lifted = make_constants<double>(params);
  const auto prompt = generator_prompt(task);
  ModelInnerProblem problem{&ctx.model, &params, {}};
  for (int i = 0; i < n; ++i) {
    SamplerConfig s{ctx.cfg.gen_temperature, ctx.cfg.max_new_tokens,
                    derive_seed(ctx.cfg.seed, {id(Stream::kTestTime), stream, static_cast<std::uint64_t>(i)})};
    const Sample smp = sample(ctx.model, lifted, nullptr, prompt, s);
    const AuxExample ex = make_aux_example(task, with_example_marker(smp.tokens));
    if (ex.parsed) problem.sequences.push_back(ex.train);
  }
  AnswerResult r = adapt_and_answer(ctx, params, task, problem,
                                    derive_seed(ctx.cfg.seed, {id(Stream::kTestTime), stream, kAdapterInit}));
  r.generated = n;
  r.parsed = static_cast<int>(problem.sequences.size());
  r.fallback = n > 0 && r.parsed == 0;
  return r;
}

AnswerResult ttt_adapt(const RunContext& ctx, const ParamVector& params, const Task& task, std::uint64_t stream,
                       int n) {
  ModelInnerProblem problem{&ctx.model, &params, {}};
  Rng rng(ctx.cfg.seed, {id(Stream::kTtt), stream});
  const int pool = static_cast<int>(ctx.train_pool.size());
  for (int i = 0; i < n && pool > 0; ++i) {
    const Task& other = ctx.train_pool[rng.range(0, pool - 1)];
    if (other.rule == task.rule) throw ContractError("ttt: training pool shares the evaluation rule");
    problem.sequences.push_back(gold_sequence(other));
  }
  AnswerResult r = adapt_and_answer(ctx, params, task, problem,
                                    derive_seed(ctx.cfg.seed, {id(Stream::kTtt), stream, kAdapterInit}));
  r.generated = n;
  r.parsed = static_cast<int>(problem.sequences.size());
  return r;
}

// ---------------------------------------------------------------- evaluation

EvalReport evaluate(const RunContext& ctx, const std::string& name, const std::vector<Task>& suite,
                    const Answerer& answer) {
  std::vector<AnswerResult> results(suite.size());
  parallel_for(static_cast<int>(suite.size()), ctx.cfg.threads,
               [&](int i) { results[i] = answer(suite[i], i); });
  EvalReport rep;
  rep.name = name;
  for (const auto& f : families(ctx.tasks)) rep.families.push_back({f, 0, 0});
  for (std::size_t i = 0; i < suite.size(); ++i) {
    auto it = std::find_if(rep.families.begin(), rep.families.end(),
                           [&](const FamilyAccuracy& f) { return f.family == suite[i].family; });
    if (it == rep.families.end()) it = rep.families.insert(rep.families.end(), {suite[i].family, 0, 0});
    it->total += 1;
    it->correct += results[i].correct ? 1 : 0;
    rep.total += 1;
    rep.correct += results[i].correct ? 1 : 0;
    rep.fallbacks += results[i].fallback ? 1 : 0;
  }
  return rep;
}

RunConfig baseline_config(const RunConfig& cfg, const std::string& name) {
  if (std::find(baseline_names().begin(), baseline_names().end(), name) == baseline_names().end())
    throw ContractError("unknown baseline: " + name);
  RunConfig c = cfg;
  if (name == "mass") c.outer = OuterVariant::kVerified;
  if (name == "mass-gold") c.outer = OuterVariant::kGold;
  return c;
}

Answerer answerer_for(const RunContext& ctx, const std::string& name, const ParamVector& params) {
  const int n = ctx.cfg.test_examples;
  if (name == "base" || name == "solver-grpo") {
    return [&ctx, &params](const Task& t, int) {
      AnswerResult r;
      r.response = greedy_answer(ctx, params, nullptr, t);
      r.correct = verify_tokens(t, r.response);
      return r;
    };
  }
  if (name == "ttt")
    return [&ctx, &params, n](const Task& t, int i) { return ttt_adapt(ctx, params, t, i, n); };
  if (name == "tt-ss" || name == "mass" || name == "mass-gold")
    return [&ctx, &params, n](const Task& t, int i) { return test_time_adapt(ctx, params, t, i, n); };
  throw ContractError("unknown baseline: " + name);
}

BaselineRun run_baseline(const RunConfig& cfg, const std::string& name, const ParamVector& base,
                         const std::vector<Task>& suite, const Progress& progress) {
  const RunConfig bc = baseline_config(cfg, name);
  const RunContext ctx(bc);
  BaselineRun run;
  const bool trains = name == "solver-grpo" || name == "mass" || name == "mass-gold";
  if (trains) {
    TrainState state = init_state(ctx, base);
    const TrainMode mode = name == "solver-grpo" ? TrainMode::kSolverGrpo : TrainMode::kMass;
    train(ctx, state, mode, nullptr, [&](const TrainState& s, const MetricRecord& rec) {
      run.metrics.push_back(rec);
      if (progress && (s.meta_step % 10 == 0 || s.meta_step == bc.meta_steps))
        progress(fmt::format("{} step {}/{} verified {:.2f} parse {:.2f} solve {:.4f}", name, s.meta_step,
                             bc.meta_steps, rec.verified_rate, rec.parse_rate, rec.solve_loss));
    });
    run.trained = std::move(state);
  }
  const ParamVector& params = trains ? run.trained->generator : base;
  run.report = evaluate(ctx, name, suite, answerer_for(ctx, name, params));
  return run;
}

GainReport family_gains(const EvalReport& base, const EvalReport& method) {
  GainReport g;
  std::vector<double> xs, ys;
  for (const auto& f : base.families) {
    const auto it = std::find_if(method.families.begin(), method.families.end(),
                                 [&](const FamilyAccuracy& m) { return m.family == f.family; });
    if (it == method.families.end() || f.total == 0) continue;
    FamilyGain fg{f.family, f.accuracy(), it->accuracy(), it->accuracy() - f.accuracy()};
    xs.push_back(fg.base_accuracy);
    ys.push_back(fg.gain);
    g.families.push_back(fg);
  }
  g.correlation = pearson(xs, ys);
  return g;
}

std::string gain_table(const GainReport& report, const std::string& method) {
  std::string out = fmt::format("{:<10} {:>9} {:>9} {:>9}\n", "family", "base", method, "gain");
  for (const auto& f : report.families)
    out += fmt::format("{:<10} {:>8.1f}% {:>8.1f}% {:>+8.1f}pp\n", f.family, 100 * f.base_accuracy,
                       100 * f.method_accuracy, 100 * f.gain);
  out += fmt::format("corr(base accuracy, gain) = {:+.3f}\n", report.correlation);
  return out;
}

}  // namespace mass
