#pragma once

// Persistence: run configs (flat key = value text), task sets (one JSON
// object per line), metrics (one JSON object per meta-step), binary
// checkpoints and result tables.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mass/config.hpp"
#include "mass/optim.hpp"
#include "mass/param_vector.hpp"
#include "mass/taskgen.hpp"

namespace mass {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- config

std::string config_to_text(const RunConfig& cfg);
/// Starts from defaults; unknown keys and malformed values are ContractErrors.
RunConfig config_from_text(std::string_view text);
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);

void save_config(const fs::path& path, const RunConfig& cfg);
RunConfig load_config(const fs::path& path);

// ---------------------------------------------------------------- tasks

std::string task_to_line(const Task& task);
/// Throws IoError naming `line_no` when the record is malformed or inconsistent.
Task task_from_line(std::string_view line, const TaskConfig& cfg, std::size_t line_no = 0);

void save_tasks(const fs::path& path, const std::vector<Task>& tasks);
std::vector<Task> load_tasks(const fs::path& path, const TaskConfig& cfg);

// ---------------------------------------------------------------- checkpoints

struct TrainState {
  ParamVector generator;
  ParamVector scorer;
  AdamState adam;
  std::int64_t meta_step = 0;
  std::uint64_t seed = 0;

  bool bit_equal(const TrainState& o) const;
};

struct Checkpoint {
  RunConfig config;
  TrainState state;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Canonical little-endian encoding; identical inputs give identical bytes.
std::string encode_checkpoint(const RunConfig& cfg, const TrainState& state);
Checkpoint decode_checkpoint(std::string_view bytes, std::string_view source = "checkpoint");

/// Atomic: written to a temporary sibling, then renamed over `path`.
void save_checkpoint(const fs::path& path, const RunConfig& cfg, const TrainState& state);
Checkpoint load_checkpoint(const fs::path& path);

/// Writes `bytes` to `path` through a temporary file and rename.
void write_file_atomic(const fs::path& path, std::string_view bytes);
std::string read_file(const fs::path& path);

// ---------------------------------------------------------------- metrics

struct MetricRecord {
  std::int64_t step = 0;
  std::vector<std::uint64_t> task_seeds;
  std::vector<std::optional<double>> outer_losses;  // empty slot: task skipped
  double mean_reward = 0.0;
  double mean_score = 0.0;
  double max_score = 0.0;
  double parse_rate = 0.0;
  double verified_rate = 0.0;
  int zero_verified_skips = 0;
  double aux_loss = 0.0;
  double solve_loss = 0.0;
  double generator_loss = 0.0;
  bool generator_updated = false;
  double scorer_grad_norm = 0.0;
  std::int64_t retained_states = 0;
  std::int64_t peak_graph_bytes = 0;
  std::string fault;  // empty unless the step was rolled back
  double wall_seconds = 0.0;

  std::string to_json() const;
  static MetricRecord from_json(std::string_view line);
  /// Equality on every field except wall time.
  bool same_numbers(const MetricRecord& o) const;
};

/// Append-only metrics file with monotone step numbers.
class MetricsLog {
 public:
  /// Opens for appending; existing records set the last seen step.
  explicit MetricsLog(fs::path path);

  void append(const MetricRecord& record);
  const fs::path& path() const { return path_; }

  static std::vector<MetricRecord> load(const fs::path& path);

 private:
  fs::path path_;
  std::ofstream out_;
  std::optional<std::int64_t> last_step_;
};

// ---------------------------------------------------------------- results

struct FamilyAccuracy {
  std::string family;
  int correct = 0;
  int total = 0;

  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }
};

struct EvalReport {
  std::string name;
  std::vector<FamilyAccuracy> families;
  int correct = 0;
  int total = 0;
  int fallbacks = 0;  // test-time adaptations that found no usable example

  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }
};

/// Aligned text table and its JSON twin (`<path>.json`).
void save_results(const fs::path& table_path, const std::vector<EvalReport>& reports);
std::string results_table(const std::vector<EvalReport>& reports);
std::vector<EvalReport> load_results_json(const fs::path& json_path);

}  // namespace mass
