#include "mass/cli.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "mass/diagnostics.hpp"
#include "mass/errors.hpp"
#include "mass/orchestrator.hpp"
#include "mass/store.hpp"
#include "mass/vocab.hpp"

namespace mass {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "mass-run";
  std::optional<std::string> backend;
  std::optional<int> threads;
  std::vector<std::string> overrides;
};

/// Defaults (or `start`), then the config file, then --set, then explicit flags.
RunConfig resolve_config(const Globals& g, std::optional<RunConfig> start = std::nullopt) {
  RunConfig cfg = start.value_or(RunConfig{});
  try {
    if (!g.config_path.empty()) cfg = load_config(g.config_path);
    for (const auto& kv : g.overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ContractError("--set expects key=value, got '" + kv + "'");
      set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (g.seed) cfg.seed = *g.seed;
    if (g.backend) cfg.backend = parse_backend(*g.backend);
    if (g.threads) cfg.threads = *g.threads;
    cfg.validate();
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

void write_manifest(const fs::path& out, const std::vector<std::string>& args, const RunConfig& cfg) {
  std::string cmd = "mass";
  for (const auto& a : args) cmd += " " + a;
  std::string text = "# command: " + cmd + "\n# resolved config; rerun with --config <this file>\n";
  text += config_to_text(cfg);
  write_file_atomic(out / "manifest", text);
}

/// Fields the pretrained base depends on.
std::string base_key(const RunConfig& c) {
  return fmt::format("{} {} {} {} {} {} {} {} {} {} {} {} {} {}", c.seed, c.width, c.blocks, c.heads, c.context,
                     c.ffn_mult, c.lora_rank, c.pretrain_steps, c.pretrain_batch, c.pretrain_lr, c.min_modulus,
                     c.max_modulus, c.demos, c.max_new_tokens);
}

Progress log_progress() {
  return [](const std::string& msg) { spdlog::info("{}", msg); };
}

/// The pretrained base, cached as `ckpt-base` in the run directory.
ParamVector load_or_pretrain_base(const fs::path& out, const RunConfig& cfg) {
  const fs::path path = out / "ckpt-base";
  if (fs::exists(path)) {
    Checkpoint c = load_checkpoint(path);
    if (base_key(c.config) == base_key(cfg)) {
      spdlog::info("using cached base model {}", path.string());
      return std::move(c.state.generator);
    }
    spdlog::info("cached base model {} was built with a different config; rebuilding", path.string());
  }
  const auto t0 = std::chrono::steady_clock::now();
  ParamVector base = pretrain_base(cfg, log_progress());
  spdlog::info("pretrained base in {:.1f}s",
               std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  const RunContext ctx(cfg, {Task{}});
  save_checkpoint(path, cfg, init_state(ctx, base));
  return base;
}

std::vector<Task> tasks_in(const fs::path& out, const char* name, const RunConfig& cfg, bool train) {
  const fs::path path = out / name;
  if (fs::exists(path)) return load_tasks(path, cfg.tasks());
  auto tasks = train ? make_train_pool(cfg) : make_eval_suite(cfg);
  save_tasks(path, tasks);
  return tasks;
}

/// Replaces (or adds) `report` in the run's results table and returns the table.
std::vector<EvalReport> merge_results(const fs::path& out, const EvalReport& report) {
  const fs::path table = out / "results.table";
  fs::path twin = table;
  twin += ".json";
  std::vector<EvalReport> all;
  if (fs::exists(twin)) all = load_results_json(twin);
  const auto it = std::find_if(all.begin(), all.end(), [&](const EvalReport& r) { return r.name == report.name; });
  if (it != all.end()) *it = report;
  else all.push_back(report);
  save_results(table, all);
  return all;
}

void print_results(const std::vector<EvalReport>& all) {
  fmt::print("{}", results_table(all));
  const auto base = std::find_if(all.begin(), all.end(), [](const EvalReport& r) { return r.name == "base"; });
  if (base == all.end()) return;
  for (const auto& r : all) {
    if (r.name == "base") continue;
    fmt::print("\n{}", gain_table(family_gains(*base, r), r.name));
  }
}

/// Drops records at or past `step` so a resumed run appends in order.
void truncate_metrics(const fs::path& path, std::int64_t step) {
  if (!fs::exists(path)) return;
  std::string kept;
  for (const auto& r : MetricsLog::load(path))
    if (r.step < step) kept += r.to_json() + "\n";
  write_file_atomic(path, kept);
}

std::string describe_tokens(const std::vector<int>& tokens) {
  return tokens.empty() ? std::string("<empty>") : vocab().decode(tokens);
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"Self-adapting solver with meta-learned example scoring"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "Run config file (key = value)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--out", g.out, "Run directory")->capture_default_str();
  app.add_option("--backend", g.backend, "Meta-gradient backend")->check(CLI::IsMember({"unroll", "adjoint"}));
  app.add_option("--threads", g.threads, "Task-parallel worker threads")->check(CLI::PositiveNumber);
  app.add_option("--set", g.overrides, "Config override key=value (repeatable)");

  auto* make_tasks = app.add_subcommand("make-tasks", "Write the training pool and evaluation suite");

  auto* train = app.add_subcommand("train", "Pretrain (cached) and meta-train");
  std::string resume;
  int ckpt_every = 10;
  train->add_option("--resume", resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
  train->add_option("--ckpt-every", ckpt_every, "Checkpoint interval in meta-steps")->check(CLI::PositiveNumber);

  auto* adapt_cmd = app.add_subcommand("adapt", "Test-time self-adaptation on one evaluation task");
  std::string adapt_ckpt;
  int task_index = 0;
  adapt_cmd->add_option("--checkpoint", adapt_ckpt, "Generator checkpoint (default: pretrained base)")
      ->check(CLI::ExistingFile);
  adapt_cmd->add_option("--task", task_index, "Index into the evaluation suite")->check(CLI::NonNegativeNumber);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the evaluation suite");
  std::string eval_ckpt;
  std::string eval_method = "tt-ss";
  std::string eval_name;
  eval->add_option("--checkpoint", eval_ckpt, "Generator checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--method", eval_method, "Answering procedure")
      ->check(CLI::IsMember({"base", "ttt", "tt-ss"}))
      ->capture_default_str();
  eval->add_option("--name", eval_name, "Row name in the results table (default: checkpoint file name)");

  auto* baseline = app.add_subcommand("baseline", "Run one baseline end to end");
  std::string baseline_name;
  baseline->add_option("name", baseline_name, "base | ttt | tt-ss | solver-grpo | mass | mass-gold")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "Check derivatives against central differences");

  auto* bench = app.add_subcommand("bench-metagrad", "Compare meta-gradient backends");
  int bench_k = 8, bench_b = 1, bench_m = 4, bench_repeats = 1;
  bench->add_option("--inner-steps", bench_k, "Inner steps K")->check(CLI::PositiveNumber)->capture_default_str();
  bench->add_option("--block-size", bench_b, "Checkpoint block size B")->check(CLI::PositiveNumber)->capture_default_str();
  bench->add_option("--examples", bench_m, "Examples per task")->check(CLI::PositiveNumber)->capture_default_str();
  bench->add_option("--repeats", bench_repeats, "Timing repeats")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const std::vector<std::string> args(argv + 1, argv + argc);
  try {
    // Commands that read a checkpoint start from the config stored in it.
    std::optional<RunConfig> stored;
    if (adapt_cmd->parsed() && !adapt_ckpt.empty()) stored = load_checkpoint(adapt_ckpt).config;
    if (eval->parsed()) stored = load_checkpoint(eval_ckpt).config;
    RunConfig cfg = resolve_config(g, stored);
    const fs::path out = g.out;
    if (baseline->parsed() &&
        std::find(baseline_names().begin(), baseline_names().end(), baseline_name) == baseline_names().end())
      throw UsageError("unknown baseline '" + baseline_name + "'");
    if (!resume.empty()) {
      // A resumed run continues under the checkpoint's config.
      const Checkpoint c = load_checkpoint(resume);
      cfg = c.config;
      if (g.threads) cfg.threads = *g.threads;
    }
    fs::create_directories(out);
    write_manifest(out, args, cfg);

    if (make_tasks->parsed()) {
      const auto pool = make_train_pool(cfg);
      const auto suite = make_eval_suite(cfg);
      save_tasks(out / "tasks.train", pool);
      save_tasks(out / "tasks.eval", suite);
      fmt::print("wrote {} training and {} evaluation tasks to {}\n", pool.size(), suite.size(), out.string());
      return 0;
    }

    if (train->parsed()) {
      const RunContext ctx(cfg, tasks_in(out, "tasks.train", cfg, true));
      TrainState state;
      if (!resume.empty()) {
        state = load_checkpoint(resume).state;
        spdlog::info("resuming from {} at step {}", resume, state.meta_step);
      } else {
        state = init_state(ctx, load_or_pretrain_base(out, cfg));
      }
      truncate_metrics(out / "metrics.log", state.meta_step);
      MetricsLog log(out / "metrics.log");
      mass::train(ctx, state, TrainMode::kMass, &log, [&](const TrainState& s, const MetricRecord& r) {
        if (!r.fault.empty()) spdlog::warn("step {}: {}", r.step, r.fault);
        if (s.meta_step % ckpt_every == 0 || s.meta_step == cfg.meta_steps) {
          save_checkpoint(out / fmt::format("ckpt-{}", s.meta_step), cfg, s);
          spdlog::info("step {}/{} verified {:.2f} parse {:.2f} score {:.3f} reward {:+.4f}", s.meta_step,
                       cfg.meta_steps, r.verified_rate, r.parse_rate, r.mean_score, r.mean_reward);
        }
      });
      fmt::print("trained to step {}; checkpoint {}\n", state.meta_step,
                 (out / fmt::format("ckpt-{}", state.meta_step)).string());
      return 0;
    }

    if (adapt_cmd->parsed()) {
      const RunContext ctx(cfg);
      const auto suite = tasks_in(out, "tasks.eval", cfg, false);
      if (task_index >= static_cast<int>(suite.size())) throw UsageError("--task is past the end of the suite");
      const ParamVector params =
          adapt_ckpt.empty() ? load_or_pretrain_base(out, cfg) : load_checkpoint(adapt_ckpt).state.generator;
      const Task& task = suite[task_index];
      const std::uint64_t before = params.hash();
      const AnswerResult unadapted{greedy_answer(ctx, params, nullptr, task)};
      const AnswerResult r = test_time_adapt(ctx, params, task, task_index, cfg.test_examples);
      if (params.hash() != before) throw std::runtime_error("adaptation mutated the base parameters");
      fmt::print("task     {}\nfamily   {}\ngold     {}\n", vocab().decode(task.prompt), task.family, task.gold);
      fmt::print("examples {} generated, {} parsed{}\n", r.generated, r.parsed, r.fallback ? " (fallback)" : "");
      fmt::print("before   {} ({})\n", describe_tokens(unadapted.response),
                 verify_tokens(task, unadapted.response) ? "correct" : "wrong");
      fmt::print("after    {} ({})\n", describe_tokens(r.response), r.correct ? "correct" : "wrong");
      return 0;
    }

    if (eval->parsed()) {
      const RunContext ctx(cfg, tasks_in(out, "tasks.train", cfg, true));
      const auto suite = tasks_in(out, "tasks.eval", cfg, false);
      const ParamVector params = load_checkpoint(eval_ckpt).state.generator;
      const std::string name = eval_name.empty() ? fs::path(eval_ckpt).filename().string() : eval_name;
      const EvalReport rep = evaluate(ctx, name, suite, answerer_for(ctx, eval_method, params));
      print_results(merge_results(out, rep));
      return 0;
    }

    if (baseline->parsed()) {
      const auto suite = tasks_in(out, "tasks.eval", cfg, false);
      const ParamVector base = load_or_pretrain_base(out, cfg);
      const BaselineRun run = run_baseline(cfg, baseline_name, base, suite, log_progress());
      if (run.trained) {
        save_checkpoint(out / ("ckpt-" + baseline_name), baseline_config(cfg, baseline_name), *run.trained);
        std::string lines;
        for (const auto& r : run.metrics) lines += r.to_json() + "\n";
        write_file_atomic(out / ("metrics-" + baseline_name + ".log"), lines);
      }
      print_results(merge_results(out, run.report));
      return 0;
    }

    if (gradcheck->parsed()) {
      const GradcheckReport rep = run_gradcheck(cfg.model(), cfg.scorer(), cfg.seed);
      fmt::print("{}", gradcheck_table(rep));
      return rep.ok() ? 0 : 1;
    }

    if (bench->parsed()) {
      const auto rows = bench_metagrad(cfg.model(), cfg.scorer(), cfg.seed, bench_m, bench_k, bench_b, bench_repeats);
      fmt::print("{}", bench_table(rows));
      return 0;
    }
  } catch (const UsageError& e) {
    fmt::print(stderr, "usage error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 2;
}

}  // namespace mass
