#include <fstream>

#include "doctest.h"
#include "mass/orchestrator.hpp"
#include "mass/store.hpp"
#include "oracles.hpp"
#include "tempdir.hpp"

using namespace mass;
namespace t = mass::testing;

namespace {

RunConfig unusual_config() {
  RunConfig c;
  c.candidates = 5;
  c.inner_lr = 0.1 + 0.2;
  c.generator_lr = 3.0000000000000004e-4;
  c.adam_eps = 1e-300;
  c.outer = OuterVariant::kGold;
  c.backend = Backend::kUnroll;
  c.seed = 18446744073709551615ULL;
  c.train_seed_offset = 123456789;
  c.gamma = 1.0 / 3.0;
  return c;
}

TrainState random_state(std::uint64_t seed) {
  RunConfig cfg;
  cfg.width = 8;
  cfg.context = 48;
  const RunContext ctx(cfg, {sample_task(1, cfg.tasks())});
  TrainState s = init_state(ctx, t::random_like(model_layout(ctx.model), seed));
  s.adam.m = t::random_like(s.generator.layout(), seed + 1);
  s.adam.v = t::random_like(s.generator.layout(), seed + 2, 0.01);
  s.adam.step = 17;
  s.meta_step = 42;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("config text round trip is lossless") {
  for (const RunConfig& c : {RunConfig{}, unusual_config()}) {
    const std::string text = config_to_text(c);
    CHECK(config_from_text(text) == c);
    CHECK(config_to_text(config_from_text(text)) == text);
  }
}

TEST_CASE("config parse errors") {
  CHECK_THROWS_AS(config_from_text("no_such_key = 1\n"), ContractError);
  CHECK_THROWS_AS(config_from_text("candidates = twelve\n"), ContractError);
  CHECK_THROWS_AS(config_from_text("candidates 12\n"), ContractError);
  CHECK_THROWS_AS(config_from_text("backend = sideways\n"), ContractError);
  CHECK(config_from_text("# comment only\n\n").candidates == RunConfig{}.candidates);
  RunConfig c;
  set_config_value(c, "outer", "gold");
  CHECK(c.outer == OuterVariant::kGold);
}

TEST_CASE("config file round trip") {
  t::TempDir dir;
  const RunConfig c = unusual_config();
  save_config(dir / "config", c);
  CHECK(load_config(dir / "config") == c);
  CHECK_THROWS_AS(load_config(dir / "missing"), IoError);
}

TEST_CASE("task lines round trip every field") {
  t::TempDir dir;
  const TaskConfig tc;
  const auto tasks = make_task_set(Split::kTrain, 50, 0, tc);
  save_tasks(dir / "tasks", tasks);
  CHECK(load_tasks(dir / "tasks", tc) == tasks);
  for (const auto& task : tasks) CHECK(task_from_line(task_to_line(task), tc) == task);
}

TEST_CASE("malformed task line names its line number") {
  t::TempDir dir;
  const TaskConfig tc;
  const auto tasks = make_task_set(Split::kTrain, 3, 0, tc);
  std::string bad = task_to_line(tasks[2]);
  const auto pos = bad.find("\"gold\":");
  REQUIRE(pos != std::string::npos);
  bad.insert(pos + 7, "1");  // gold no longer matches the rule
  {
    std::ofstream out(dir / "tasks");
    out << task_to_line(tasks[0]) << "\n" << task_to_line(tasks[1]) << "\n" << bad << "\n";
  }
  try {
    load_tasks(dir / "tasks", tc);
    FAIL("expected an error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  {
    std::ofstream out(dir / "junk");
    out << "{not json\n";
  }
  CHECK_THROWS_AS(load_tasks(dir / "junk", tc), IoError);
}

TEST_CASE("empty task file gives an empty list") {
  t::TempDir dir;
  { std::ofstream out(dir / "empty"); }
  CHECK(load_tasks(dir / "empty", TaskConfig{}).empty());
}

TEST_CASE("checkpoint round trip is bit-exact and canonical") {
  t::TempDir dir;
  const RunConfig cfg = unusual_config();
  const TrainState s = random_state(5);
  save_checkpoint(dir / "a", cfg, s);
  save_checkpoint(dir / "b", cfg, s);
  CHECK(read_file(dir / "a") == read_file(dir / "b"));
  const Checkpoint c = load_checkpoint(dir / "a");
  CHECK(c.config == cfg);
  CHECK(c.state.bit_equal(s));
  CHECK(encode_checkpoint(c.config, c.state) == read_file(dir / "a"));
  CHECK_FALSE(fs::exists(dir / "a.tmp"));
}

TEST_CASE("corrupted checkpoints are rejected explicitly") {
  const TrainState s = random_state(6);
  const std::string good = encode_checkpoint(RunConfig{}, s);

  std::string flipped = good;
  flipped[flipped.size() / 2] ^= 0x01;
  CHECK_THROWS_AS(decode_checkpoint(flipped), IoError);

  CHECK_THROWS_AS(decode_checkpoint(good.substr(0, good.size() - 3)), IoError);
  CHECK_THROWS_AS(decode_checkpoint(""), IoError);

  std::string magic = good;
  magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(magic), IoError);

  std::string version = good;
  version[8] = static_cast<char>(kCheckpointVersion + 1);
  try {
    decode_checkpoint(version);
    FAIL("expected a version error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }
}

TEST_CASE("unwritable path names the path") {
  const fs::path bad = "/nonexistent-dir/sub/ckpt";
  try {
    save_checkpoint(bad, RunConfig{}, random_state(7));
    FAIL("expected an I/O error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("/nonexistent-dir/sub") != std::string::npos);
  }
}

TEST_CASE("metrics log appends, reloads and enforces order") {
  t::TempDir dir;
  std::vector<MetricRecord> written;
  {
    MetricsLog log(dir / "metrics.log");
    for (int i = 0; i < 5; ++i) {
      MetricRecord r;
      r.step = i;
      r.task_seeds = {static_cast<std::uint64_t>(i), 99};
      r.outer_losses = {0.1 * i, std::nullopt};
      r.mean_reward = -1.0 / 3.0;
      r.max_score = 0.75;
      r.generator_updated = i % 2 == 0;
      r.fault = i == 3 ? "non-finite \"gradient\"" : "";
      r.wall_seconds = 0.5;
      log.append(r);
      written.push_back(r);
    }
    MetricRecord back;
    back.step = 2;
    CHECK_THROWS_AS(log.append(back), ContractError);
  }
  std::ifstream in(dir / "metrics.log");
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == 5);
  const auto loaded = MetricsLog::load(dir / "metrics.log");
  REQUIRE(loaded.size() == written.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].same_numbers(written[i]));
    CHECK(loaded[i].wall_seconds == written[i].wall_seconds);
  }

  // Reopening continues the order check from the file.
  MetricsLog again(dir / "metrics.log");
  MetricRecord old;
  old.step = 4;
  CHECK_THROWS_AS(again.append(old), ContractError);
  old.step = 5;
  again.append(old);
  CHECK(MetricsLog::load(dir / "metrics.log").size() == 6);
}

TEST_CASE("same_numbers ignores only wall time") {
  MetricRecord a, b;
  a.wall_seconds = 1.0;
  b.wall_seconds = 2.0;
  CHECK(a.same_numbers(b));
  b.mean_score = 1e-300;
  CHECK_FALSE(a.same_numbers(b));
}

TEST_CASE("results table and machine-readable twin") {
  t::TempDir dir;
  EvalReport base{"base", {{"M07-11", 3, 10}, {"M12-17", 1, 10}}, 4, 20, 0};
  EvalReport mass{"mass", {{"M07-11", 5, 10}, {"M12-17", 4, 10}}, 9, 20, 2};
  save_results(dir / "results.table", {base, mass});
  const std::string table = read_file(dir / "results.table");
  CHECK(table.find("base") != std::string::npos);
  CHECK(table.find("45.0%") != std::string::npos);
  const auto back = load_results_json(dir / "results.table.json");
  REQUIRE(back.size() == 2);
  CHECK(back[1].name == "mass");
  CHECK(back[1].correct == 9);
  CHECK(back[1].fallbacks == 2);
  CHECK(back[1].families[1].correct == 4);
}
