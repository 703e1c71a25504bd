#include "mass/checkpoint_store.hpp"

#include <string>

#include "mass/errors.hpp"

namespace mass {

CheckpointStore::CheckpointStore(int horizon, int block_size)
    : horizon_(horizon), block_size_(block_size) {
  if (horizon < 0) throw ContractError("checkpoint store: negative horizon");
  if (block_size < 1) throw ContractError("checkpoint store: block size must be >= 1");
}

void CheckpointStore::offer(int k, const ParamVector& state) {
  if (k < 0 || k > horizon_) throw ContractError("checkpoint store: step out of range");
  if (k % block_size_ != 0 && k != horizon_) return;
  if (!snapshots_.empty() && snapshots_.back().first >= k) {
    throw ContractError("checkpoint store: steps must be offered in increasing order");
  }
  snapshots_.emplace_back(k, state);
}

std::size_t CheckpointStore::capacity(int horizon, int block_size) {
  return static_cast<std::size_t>((horizon + block_size - 1) / block_size) + 1;
}

ParamVector checkpoint_replay(const CheckpointStore& store, int k, const Stepper& stepper) {
  if (k < 0 || k > store.horizon_) {
    throw ContractError("checkpoint_replay: step " + std::to_string(k) + " outside [0, " +
                        std::to_string(store.horizon_) + "]");
  }
  const std::pair<int, ParamVector>* base = nullptr;
  for (const auto& snap : store.snapshots_) {
    if (snap.first <= k) base = &snap;
  }
  if (base == nullptr) throw ContractError("checkpoint_replay: no snapshot at or before step");
  ParamVector state = base->second;
  for (int j = base->first; j < k; ++j) {
    state = stepper(j, state);
    ++store.replayed_steps_;
  }
  return state;
}

}  // namespace mass
