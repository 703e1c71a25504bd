#pragma once

// Transformer building blocks shared by the sequence model and the scorer.

#include <string>
#include <vector>

#include "mass/graph.hpp"
#include "mass/param_vector.hpp"

namespace mass::nn {

/// Shapes of one pre-norm block (attention + feed-forward) under `prefix`.
void append_block_shapes(std::vector<SegmentShape>& out, const std::string& prefix, int width,
                         int ffn_width);

/// Attention projections that carry low-rank adapters.
std::vector<std::string> adapted_projections(const std::string& prefix);

/// Optional low-rank adapters: `vars` holds `<matrix>.A` (r x in) and `<matrix>.B` (out x r).
template <class S>
struct Adapters {
  const ParamVars<S>* vars = nullptr;
  double scale = 1.0;
};

template <class S>
ad::Var<S> layer_norm(const ad::Var<S>& x, const ad::Var<S>& gain, const ad::Var<S>& bias);

template <class S>
ad::Var<S> softmax_rows(const ad::Var<S>& x);

template <class S>
ad::Var<S> log_softmax_rows(const ad::Var<S>& x);

/// x W^T, plus scale * (x A^T) B^T when an adapter exists for `name`.
template <class S>
ad::Var<S> project(const ad::Var<S>& x, const ParamVars<S>& params, const std::string& name,
                   const Adapters<S>& adapters);

template <class S>
ad::Var<S> block(const ad::Var<S>& x, const ParamVars<S>& params, const std::string& prefix,
                 int heads, bool causal, const Adapters<S>& adapters);

}  // namespace mass::nn
