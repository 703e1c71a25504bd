#include <algorithm>
#include <sstream>

#include "doctest.h"
#include "mass/orchestrator.hpp"
#include "mass/vocab.hpp"
#include "tempdir.hpp"

using namespace mass;
namespace t = mass::testing;

namespace {

RunConfig small_config() {
  RunConfig c;
  c.width = 8;
  c.blocks = 2;
  c.heads = 2;
  c.context = 48;
  c.ffn_mult = 2;
  c.lora_rank = 2;
  c.lora_scale = 1.0;
  c.scorer_width = 8;
  c.scorer_context = 48;
  c.candidates = 4;
  c.attempts = 3;
  c.meta_batch = 2;
  c.meta_steps = 6;
  c.warmup_steps = 3;
  c.train_tasks = 20;
  c.eval_tasks = 12;
  c.test_examples = 3;
  c.pretrain_steps = 300;
  c.pretrain_batch = 4;
  c.seed = 11;
  return c;
}

/// Pretrained once; the tiny base is shared by every case.
const ParamVector& small_base() {
  static const ParamVector base = pretrain_base(small_config());
  return base;
}

std::vector<MetricRecord> run_steps(const RunContext& ctx, TrainState& state, std::int64_t until) {
  std::vector<MetricRecord> out;
  while (state.meta_step < until) out.push_back(meta_train_step(ctx, state, batch_for_step(ctx, state.meta_step)).record);
  return out;
}

bool same_records(const std::vector<MetricRecord>& a, const std::vector<MetricRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!a[i].same_numbers(b[i])) return false;
  return true;
}

}  // namespace

TEST_CASE("generator is frozen during warmup, scorer moves") {
  RunConfig cfg = small_config();
  cfg.outer = OuterVariant::kGold;  // every task carries signal
  const RunContext ctx(cfg);
  TrainState state = init_state(ctx, small_base());
  const auto gen0 = state.generator.hash();
  auto scorer = state.scorer.hash();
  int scorer_moves = 0;
  for (int s = 0; s < cfg.warmup_steps; ++s) {
    const auto r = meta_train_step(ctx, state, batch_for_step(ctx, s));
    CHECK(r.applied);
    CHECK_FALSE(r.record.generator_updated);
    CHECK(state.generator.hash() == gen0);
    // With no parsed example the scorer gradient is exactly zero.
    CHECK((state.scorer.hash() != scorer) == (r.record.parse_rate > 0.0));
    scorer_moves += state.scorer.hash() != scorer;
    scorer = state.scorer.hash();
  }
  CHECK(scorer_moves > 0);
  const auto r = meta_train_step(ctx, state, batch_for_step(ctx, cfg.warmup_steps));
  CHECK(r.record.generator_updated);
  CHECK(state.generator.hash() != gen0);
}

TEST_CASE("per-task events follow generate, score, adapt, outer; updates come last") {
  RunConfig cfg = small_config();
  cfg.outer = OuterVariant::kGold;
  cfg.warmup_steps = 0;
  const RunContext ctx(cfg);
  TrainState state = init_state(ctx, small_base());
  const auto r = meta_train_step(ctx, state, batch_for_step(ctx, 0));
  const std::vector<Event> per_task{Event::kGenerate, Event::kScore, Event::kAdapt, Event::kOuter};
  for (int slot = 0; slot < cfg.meta_batch; ++slot) {
    std::vector<Event> seen;
    for (const auto& e : r.events)
      if (e.task == slot) seen.push_back(e.event);
    CHECK(seen == per_task);
  }
  REQUIRE(r.events.size() == per_task.size() * cfg.meta_batch + 2);
  CHECK(r.events[r.events.size() - 2].event == Event::kScorerUpdate);
  CHECK(r.events.back().event == Event::kGeneratorUpdate);
  // Task slots are recorded in order.
  int last = -1;
  for (const auto& e : r.events)
    if (e.task >= 0) {
      CHECK(e.task >= last);
      last = e.task;
    }
}

TEST_CASE("fixed seed reproduces metrics and state bit-for-bit") {
  const RunConfig cfg = small_config();
  const RunContext ctx(cfg);
  TrainState a = init_state(ctx, small_base());
  TrainState b = init_state(ctx, small_base());
  const auto ra = run_steps(ctx, a, cfg.meta_steps);
  const auto rb = run_steps(ctx, b, cfg.meta_steps);
  CHECK(same_records(ra, rb));
  CHECK(a.bit_equal(b));
  CHECK(ra.back().generator_updated);
}

TEST_CASE("thread count does not change results") {
  RunConfig cfg = small_config();
  const RunContext serial(cfg);
  cfg.threads = 3;
  const RunContext parallel(cfg);
  TrainState a = init_state(serial, small_base());
  TrainState b = init_state(parallel, small_base());
  const auto ra = run_steps(serial, a, 5);
  const auto rb = run_steps(parallel, b, 5);
  CHECK(same_records(ra, rb));
  CHECK(a.bit_equal(b));
  const auto suite = make_eval_suite(cfg);
  const auto ea = evaluate(serial, "x", suite, answerer_for(serial, "tt-ss", a.generator));
  const auto eb = evaluate(parallel, "x", suite, answerer_for(parallel, "tt-ss", a.generator));
  CHECK(ea.correct == eb.correct);
  CHECK(ea.fallbacks == eb.fallbacks);
}

TEST_CASE("checkpoint resume equals an uninterrupted run") {
  t::TempDir dir;
  const RunConfig cfg = small_config();
  const RunContext ctx(cfg);
  TrainState full = init_state(ctx, small_base());
  const auto all = run_steps(ctx, full, cfg.meta_steps);

  TrainState first = init_state(ctx, small_base());
  auto records = run_steps(ctx, first, 4);
  save_checkpoint(dir / "ckpt-4", cfg, first);
  Checkpoint c = load_checkpoint(dir / "ckpt-4");
  const RunContext resumed(c.config);
  const auto rest = run_steps(resumed, c.state, cfg.meta_steps);
  records.insert(records.end(), rest.begin(), rest.end());
  CHECK(same_records(records, all));
  CHECK(c.state.bit_equal(full));
}

TEST_CASE("empty batch leaves state unchanged") {
  const RunContext ctx(small_config());
  TrainState state = init_state(ctx, small_base());
  const TrainState before = state;
  const auto r = meta_train_step(ctx, state, {});
  CHECK_FALSE(r.applied);
  CHECK(r.events.empty());
  CHECK(state.bit_equal(before));
}

TEST_CASE("numeric fault rolls the step back and is recorded") {
  RunConfig cfg = small_config();
  cfg.warmup_steps = 0;
  cfg.outer = OuterVariant::kGold;
  const RunContext ctx(cfg);
  TrainState state = init_state(ctx, small_base());
  state.scorer.at("head.b").data[0] = std::numeric_limits<double>::quiet_NaN();
  const TrainState before = state;
  const auto r = meta_train_step(ctx, state, batch_for_step(ctx, 0));
  CHECK_FALSE(r.applied);
  CHECK_FALSE(r.record.fault.empty());
  CHECK(state.meta_step == before.meta_step + 1);
  CHECK(state.generator.bit_equal(before.generator));
  CHECK(state.scorer.bit_equal(before.scorer));
  CHECK(state.adam.step == before.adam.step);
}

TEST_CASE("solver-grpo updates the generator from the first step without a scorer") {
  const RunContext ctx(small_config());
  TrainState state = init_state(ctx, small_base());
  const auto scorer = state.scorer.hash();
  const auto r = meta_train_step(ctx, state, batch_for_step(ctx, 0), TrainMode::kSolverGrpo);
  CHECK(r.record.generator_updated);
  CHECK(state.scorer.hash() == scorer);
  for (const auto& e : r.events) CHECK(e.event != Event::kScorerUpdate);
}

TEST_CASE("test-time adaptation: no examples, isolation, no mutation") {
  const RunContext ctx(small_config());
  const ParamVector& base = small_base();
  const auto suite = make_eval_suite(ctx.cfg);
  const auto hash = base.hash();

  for (std::size_t i = 0; i < 4; ++i) {
    const auto r = test_time_adapt(ctx, base, suite[i], i, 0);
    CHECK(r.response == greedy_answer(ctx, base, nullptr, suite[i]));
    CHECK_FALSE(r.fallback);
    CHECK(r.generated == 0);
  }

  const auto alone = test_time_adapt(ctx, base, suite[1], 1, 3);
  (void)test_time_adapt(ctx, base, suite[0], 0, 3);
  const auto after = test_time_adapt(ctx, base, suite[1], 1, 3);
  CHECK(alone.response == after.response);
  CHECK(base.hash() == hash);
}

TEST_CASE("unparsable generations fall back to the unadapted answer") {
  const RunContext ctx(small_config());
  // An untrained model almost never emits the example grammar.
  const ParamVector untrained = init_model(ctx.model, 3);
  const auto suite = make_eval_suite(ctx.cfg);
  int fallbacks = 0;
  for (std::size_t i = 0; i < suite.size(); ++i) {
    const auto r = test_time_adapt(ctx, untrained, suite[i], i, 3);
    CHECK(r.parsed <= r.generated);
    if (r.parsed == 0) {
      CHECK(r.fallback);
      CHECK(r.response == greedy_answer(ctx, untrained, nullptr, suite[i]));
      ++fallbacks;
    }
  }
  CHECK(fallbacks > 0);
}

TEST_CASE("evaluate: oracle, constant-wrong, and aggregation") {
  const RunContext ctx(small_config());
  const auto suite = make_eval_suite(ctx.cfg);
  const auto oracle = evaluate(ctx, "oracle", suite, [](const Task& task, int) {
    AnswerResult r;
    r.response = number_tokens(task.gold);
    r.correct = verify_tokens(task, r.response);
    return r;
  });
  CHECK(oracle.accuracy() == 1.0);
  const auto wrong = evaluate(ctx, "wrong", suite, [](const Task& task, int) {
    AnswerResult r;
    r.response = number_tokens(task.gold + 1);
    r.correct = verify_tokens(task, r.response);
    return r;
  });
  CHECK(wrong.accuracy() == 0.0);

  const auto odd = evaluate(ctx, "odd", suite, [](const Task&, int i) {
    AnswerResult r;
    r.correct = i % 3 == 0;
    return r;
  });
  double weighted = 0.0;
  int total = 0;
  for (const auto& f : odd.families) {
    weighted += f.accuracy() * f.total;
    total += f.total;
  }
  CHECK(total == odd.total);
  CHECK(weighted / total == doctest::Approx(odd.accuracy()).epsilon(1e-15));
}

TEST_CASE("baselines: names, config diff and split contract") {
  const RunConfig cfg = small_config();
  CHECK_THROWS_AS(baseline_config(cfg, "oracle"), ContractError);
  const auto a = config_to_text(baseline_config(cfg, "mass"));
  const auto b = config_to_text(baseline_config(cfg, "mass-gold"));
  std::istringstream sa(a), sb(b);
  int differing = 0;
  for (std::string la, lb; std::getline(sa, la) && std::getline(sb, lb);) differing += la != lb;
  CHECK(differing == 1);
  CHECK(a.find("outer = verified") != std::string::npos);
  CHECK(b.find("outer = gold") != std::string::npos);

  // TTT draws only from the training pool.
  const auto suite = make_eval_suite(cfg);
  const RunContext ctx(cfg);
  for (const auto& task : ctx.train_pool)
    for (const auto& e : suite) CHECK_FALSE(task.rule == e.rule);
  const RunContext leaky(cfg, {suite[0]});
  CHECK_THROWS_AS(ttt_adapt(leaky, small_base(), suite[0], 0, 2), ContractError);
}

TEST_CASE("base baseline is reproducible") {
  const RunConfig cfg = small_config();
  const auto suite = make_eval_suite(cfg);
  const auto r1 = run_baseline(cfg, "base", small_base(), suite);
  const auto r2 = run_baseline(cfg, "base", small_base(), suite);
  CHECK(results_table({r1.report}) == results_table({r2.report}));
  CHECK_FALSE(r1.trained);
}

TEST_CASE("family gains and their correlation") {
  EvalReport base{"base", {{"A", 8, 10}, {"B", 5, 10}, {"C", 2, 10}}, 15, 30, 0};
  EvalReport method{"m", {{"A", 8, 10}, {"B", 6, 10}, {"C", 4, 10}}, 18, 30, 0};
  const auto g = family_gains(base, method);
  REQUIRE(g.families.size() == 3);
  CHECK(g.families[2].gain == doctest::Approx(0.2));
  // Gains (0, .1, .2) fall linearly as base accuracy (.8, .5, .2) rises.
  CHECK(g.correlation == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(gain_table(g, "m").find("corr") != std::string::npos);
}
