#pragma once

// Self-checks run from the command line: derivative checks against central
// differences and the meta-gradient backend benchmark.

#include <cstdint>
#include <string>
#include <vector>

#include "mass/metagrad.hpp"

namespace mass {

struct CheckResult {
  std::string name;
  double rel_err = 0.0;
  double tolerance = 0.0;
  int compared = 0;

  bool ok() const { return rel_err <= tolerance; }
};

struct GradcheckReport {
  std::vector<CheckResult> checks;
  double seconds = 0.0;

  bool ok() const;
};

/// grad, hvp and mixed partials of the adapted nll, and the meta-gradient
/// (eta and every score), each against central differences.
GradcheckReport run_gradcheck(const ModelConfig& model, const ScorerConfig& scorer, std::uint64_t seed,
                              int examples = 4, int inner_steps = 2);

struct BenchRow {
  Backend backend;
  int inner_steps = 0;
  int block_size = 1;
  std::int64_t retained_states = 0;
  std::int64_t peak_graph_bytes = 0;
  double seconds = 0.0;
  double max_abs_diff = 0.0;  // against the unroll result
};

std::vector<BenchRow> bench_metagrad(const ModelConfig& model, const ScorerConfig& scorer, std::uint64_t seed,
                                     int examples, int inner_steps, int block_size, int repeats = 1);

std::string gradcheck_table(const GradcheckReport& report);
std::string bench_table(const std::vector<BenchRow>& rows);

}  // namespace mass
