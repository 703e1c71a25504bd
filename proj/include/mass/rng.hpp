#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mass {

/// Seed for one named random stream.
///
/// Streams are addressed by a path of integers below the master seed, e.g.
/// (purpose, meta-step, task, sample). Each path element is folded in with a
/// splitmix64 round, so sibling streams are decorrelated and a stream's draws
/// never depend on how many draws other streams made.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t master, std::initializer_list<std::uint64_t> path)
      : engine_(derive_seed(master, path)) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  /// Uniform integer in [lo, hi].
  int range(int lo, int hi);
  /// Standard normal (Box-Muller).
  double normal();

  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

// Stream purposes.
enum class Stream : std::uint64_t {
  kInit = 1,
  kTaskDemos = 2,
  kGenerate = 3,
  kAttempt = 4,
  kBatch = 5,
  kTestTime = 6,
  kPretrain = 7,
  kLoraInit = 8,
  kTtt = 9,
};

inline std::uint64_t id(Stream s) { return static_cast<std::uint64_t>(s); }

}  // namespace mass
