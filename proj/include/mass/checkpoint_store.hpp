#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "mass/param_vector.hpp"

namespace mass {

/// Maps state k to state k+1. Must be deterministic for replay to be exact.
using Stepper = std::function<ParamVector(int k, const ParamVector& state)>;

/// Sparse snapshots of a K-step trajectory: states at multiples of the block
/// size plus the final state, so at most ceil(K/B)+1 are retained.
class CheckpointStore {
 public:
  CheckpointStore() = default;
  CheckpointStore(int horizon, int block_size);

  /// Keeps `state` if step k falls on a block boundary or is the last step.
  void offer(int k, const ParamVector& state);

  int horizon() const { return horizon_; }
  int block_size() const { return block_size_; }
  std::size_t num_snapshots() const { return snapshots_.size(); }
  const std::vector<std::pair<int, ParamVector>>& snapshots() const { return snapshots_; }

  static std::size_t capacity(int horizon, int block_size);

  /// Steps recomputed by replays so far.
  std::size_t replayed_steps() const { return replayed_steps_; }

 private:
  friend ParamVector checkpoint_replay(const CheckpointStore&, int, const Stepper&);

  int horizon_ = 0;
  int block_size_ = 1;
  std::vector<std::pair<int, ParamVector>> snapshots_;
  mutable std::size_t replayed_steps_ = 0;
};

/// State k, replayed forward from the nearest snapshot at or before k.
ParamVector checkpoint_replay(const CheckpointStore& store, int k, const Stepper& stepper);

}  // namespace mass
