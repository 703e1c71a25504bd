#pragma once

// Tensor-level reverse-mode differentiation.
//
// Every op records a vector-Jacobian product written in terms of other ops, so a
// backward pass run with `create_graph` is itself differentiable
// (reverse-over-reverse). Instantiating the engine over `Dual` instead of
// `double` carries one tangent direction through both passes, which yields
// forward-over-reverse second derivatives without building a second graph.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "mass/errors.hpp"
#include "mass/matrix.hpp"

namespace mass::ad {

template <class S>
class Var;

/// Per-thread instrumentation of live graph storage.
struct GraphCounters {
  std::int64_t live_nodes = 0;
  std::int64_t live_bytes = 0;
  std::int64_t peak_bytes = 0;
  std::int64_t created_nodes = 0;
};

GraphCounters& graph_counters();
void reset_peak_bytes();

/// Thread-local switch controlling whether new ops record their inputs.
class GradMode {
 public:
  static bool enabled();
  static void set(bool on);
};

class GradModeGuard {
 public:
  explicit GradModeGuard(bool on) : prev_(GradMode::enabled()) { GradMode::set(on); }
  ~GradModeGuard() { GradMode::set(prev_); }
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool prev_;
};

struct NoGradGuard : GradModeGuard {
  NoGradGuard() : GradModeGuard(false) {}
};

template <class S>
struct Node : std::enable_shared_from_this<Node<S>> {
  using Backward = std::function<std::vector<Var<S>>(const Var<S>& self, const Var<S>& grad)>;

  explicit Node(Matrix<S> v);
  ~Node();
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  Matrix<S> value;
  std::vector<Var<S>> parents;
  Backward backward;
  bool requires_grad = false;
};

template <class S>
class Var {
 public:
  using scalar_type = S;

  Var() = default;
  explicit Var(std::shared_ptr<Node<S>> node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Matrix<S>& value() const { return node_->value; }
  int rows() const { return node_->value.rows; }
  int cols() const { return node_->value.cols; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const Var& parent(std::size_t i) const { return node_->parents[i]; }
  Node<S>* get() const { return node_.get(); }

  /// Value of a 1x1 variable.
  const S& item() const;

 private:
  std::shared_ptr<Node<S>> node_;
};

// Construction.
template <class S>
Var<S> constant(Matrix<S> value);
template <class S>
Var<S> leaf(Matrix<S> value);
template <class S>
Var<S> detach(const Var<S>& a);
template <class S>
Var<S> scalar(S value);
template <class S>
Var<S> zeros_like(const Var<S>& a);

// Elementwise.
template <class S>
Var<S> add(const Var<S>& a, const Var<S>& b);
template <class S>
Var<S> sub(const Var<S>& a, const Var<S>& b);
template <class S>
Var<S> mul(const Var<S>& a, const Var<S>& b);
template <class S>
Var<S> scale(const Var<S>& a, double k);
template <class S>
Var<S> add_scalar(const Var<S>& a, double k);
template <class S>
Var<S> mul_scalar(const Var<S>& a, const Var<S>& s);

// Broadcasts: `row` is 1xC, `col` is Rx1.
template <class S>
Var<S> add_row(const Var<S>& a, const Var<S>& row);
template <class S>
Var<S> mul_row(const Var<S>& a, const Var<S>& row);
template <class S>
Var<S> add_col(const Var<S>& a, const Var<S>& col);
template <class S>
Var<S> mul_col(const Var<S>& a, const Var<S>& col);

// Products: a*b, a*b^T, a^T*b.
template <class S>
Var<S> matmul(const Var<S>& a, const Var<S>& b);
template <class S>
Var<S> matmul_nt(const Var<S>& a, const Var<S>& b);
template <class S>
Var<S> matmul_tn(const Var<S>& a, const Var<S>& b);

// Reductions and their adjoint broadcasts. Reductions fail fast on non-finite results.
template <class S>
Var<S> sum_all(const Var<S>& a);
template <class S>
Var<S> sum_rows(const Var<S>& a);
template <class S>
Var<S> sum_cols(const Var<S>& a);
template <class S>
Var<S> expand_all(const Var<S>& a, int rows, int cols);
template <class S>
Var<S> expand_rows(const Var<S>& a, int rows);
template <class S>
Var<S> expand_cols(const Var<S>& a, int cols);

// Nonlinearities.
template <class S>
Var<S> exp(const Var<S>& a);
template <class S>
Var<S> log(const Var<S>& a);
template <class S>
Var<S> tanh(const Var<S>& a);
template <class S>
Var<S> sigmoid(const Var<S>& a);
template <class S>
Var<S> rsqrt(const Var<S>& a);
template <class S>
Var<S> reciprocal(const Var<S>& a);

// Indexing.
template <class S>
Var<S> gather_rows(const Var<S>& table, std::span<const int> ids);
template <class S>
Var<S> scatter_rows(const Var<S>& a, std::span<const int> ids, int rows);
template <class S>
Var<S> slice_cols(const Var<S>& a, int start, int len);
template <class S>
Var<S> pad_cols(const Var<S>& a, int start, int total);

// Piecewise; the gradient mask is a constant, so these are linear almost everywhere.
template <class S>
Var<S> clamp(const Var<S>& a, double lo, double hi);
template <class S>
Var<S> minimum(const Var<S>& a, const Var<S>& b);

/// Gradients of the 1x1 `output` with respect to each of `inputs`.
///
/// Inputs may be leaves or intermediate nodes; for an intermediate node the
/// result is the total derivative through its consumers. Unreachable inputs
/// get zeros. With `create_graph` the returned variables are themselves
/// differentiable. With `stop_at_inputs` the backward pass does not continue
/// past an input node, which is only valid when no input is an ancestor of
/// another.
template <class S>
std::vector<Var<S>> gradients(const Var<S>& output, std::span<const Var<S>> inputs,
                              bool create_graph = false, bool stop_at_inputs = false);

}  // namespace mass::ad
