#include "mass/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>
#include <utility>

namespace mass::ad {

namespace {

thread_local GraphCounters tl_counters;
thread_local bool tl_grad_enabled = true;

template <class S>
std::int64_t byte_size(const Matrix<S>& m) {
  return static_cast<std::int64_t>(m.size() * sizeof(S));
}

void require(bool ok, const char* op, const char* what) {
  if (!ok) throw ContractError(std::string(op) + ": " + what);
}

template <class S>
void check_finite(const Matrix<S>& m, const char* op) {
  for (const S& x : m.data) {
    if (!is_finite(x)) throw NumericFault(op, "non-finite reduction result");
  }
}

// Records `bw` only when grad mode is on and some input requires grad.
template <class S, class F>
Var<S> make_op(Matrix<S> value, std::vector<Var<S>> parents, F&& bw) {
  auto node = std::make_shared<Node<S>>(std::move(value));
  if (GradMode::enabled()) {
    const bool any = std::any_of(parents.begin(), parents.end(),
                                 [](const Var<S>& p) { return p.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->parents = std::move(parents);
      node->backward = std::forward<F>(bw);
    }
  }
  return Var<S>(std::move(node));
}

template <class S>
bool needs(const Var<S>& self, std::size_t i) {
  return self.parent(i).requires_grad();
}

template <class S, class Fn>
Matrix<S> map(const Matrix<S>& a, Fn fn) {
  Matrix<S> out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = fn(a.data[i]);
  return out;
}

template <class S, class Fn>
Matrix<S> zip(const Matrix<S>& a, const Matrix<S>& b, const char* op, Fn fn) {
  require(a.same_shape(b), op, "shape mismatch");
  Matrix<S> out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = fn(a.data[i], b.data[i]);
  return out;
}

double s_exp(double x) { return std::exp(x); }
double s_log(double x) { return std::log(x); }
double s_tanh(double x) { return std::tanh(x); }
double s_sqrt(double x) { return std::sqrt(x); }
Dual s_exp(const Dual& x) { return mass::exp(x); }
Dual s_log(const Dual& x) { return mass::log(x); }
Dual s_tanh(const Dual& x) { return mass::tanh(x); }
Dual s_sqrt(const Dual& x) { return mass::sqrt(x); }

}  // namespace

GraphCounters& graph_counters() { return tl_counters; }
void reset_peak_bytes() { tl_counters.peak_bytes = tl_counters.live_bytes; }

bool GradMode::enabled() { return tl_grad_enabled; }
void GradMode::set(bool on) { tl_grad_enabled = on; }

template <class S>
Node<S>::Node(Matrix<S> v) : value(std::move(v)) {
  auto& c = tl_counters;
  ++c.live_nodes;
  ++c.created_nodes;
  c.live_bytes += byte_size(value);
  c.peak_bytes = std::max(c.peak_bytes, c.live_bytes);
}

template <class S>
Node<S>::~Node() {
  --tl_counters.live_nodes;
  tl_counters.live_bytes -= byte_size(value);
}

template <class S>
const S& Var<S>::item() const {
  require(rows() == 1 && cols() == 1, "item", "not a 1x1 variable");
  return node_->value.data[0];
}

// ---------------------------------------------------------------- construction

template <class S>
Var<S> constant(Matrix<S> value) {
  return Var<S>(std::make_shared<Node<S>>(std::move(value)));
}

template <class S>
Var<S> leaf(Matrix<S> value) {
  auto node = std::make_shared<Node<S>>(std::move(value));
  node->requires_grad = true;
  return Var<S>(std::move(node));
}

template <class S>
Var<S> detach(const Var<S>& a) {
  return constant(a.value());
}

template <class S>
Var<S> scalar(S value) {
  return constant(Matrix<S>(1, 1, value));
}

template <class S>
Var<S> zeros_like(const Var<S>& a) {
  return constant(Matrix<S>(a.rows(), a.cols()));
}

// ----------------------------------------------------------------- elementwise

template <class S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  return make_op(zip(a.value(), b.value(), "add", [](const S& x, const S& y) { return x + y; }),
                 {a, b}, [](const Var<S>&, const Var<S>& g) { return std::vector<Var<S>>{g, g}; });
}

template <class S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  return make_op(zip(a.value(), b.value(), "sub", [](const S& x, const S& y) { return x - y; }),
                 {a, b}, [](const Var<S>& self, const Var<S>& g) {
                   return std::vector<Var<S>>{g, needs(self, 1) ? scale(g, -1.0) : Var<S>()};
                 });
}

template <class S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  return make_op(zip(a.value(), b.value(), "mul", [](const S& x, const S& y) { return x * y; }),
                 {a, b}, [](const Var<S>& self, const Var<S>& g) {
                   return std::vector<Var<S>>{
                       needs(self, 0) ? mul(g, self.parent(1)) : Var<S>(),
                       needs(self, 1) ? mul(g, self.parent(0)) : Var<S>()};
                 });
}

template <class S>
Var<S> scale(const Var<S>& a, double k) {
  return make_op(map(a.value(), [k](const S& x) { return x * S(k); }), {a},
                 [k](const Var<S>&, const Var<S>& g) { return std::vector<Var<S>>{scale(g, k)}; });
}

template <class S>
Var<S> add_scalar(const Var<S>& a, double k) {
  return make_op(map(a.value(), [k](const S& x) { return x + S(k); }), {a},
                 [](const Var<S>&, const Var<S>& g) { return std::vector<Var<S>>{g}; });
}

template <class S>
Var<S> mul_scalar(const Var<S>& a, const Var<S>& s) {
  require(s.rows() == 1 && s.cols() == 1, "mul_scalar", "scalar operand must be 1x1");
  const S k = s.value().data[0];
  return make_op(map(a.value(), [&k](const S& x) { return x * k; }), {a, s},
                 [](const Var<S>& self, const Var<S>& g) {
                   return std::vector<Var<S>>{
                       needs(self, 0) ? mul_scalar(g, self.parent(1)) : Var<S>(),
                       needs(self, 1) ? sum_all(mul(g, self.parent(0))) : Var<S>()};
                 });
}

// ------------------------------------------------------------------ broadcasts

template <class S>
Var<S> add_row(const Var<S>& a, const Var<S>& row) {
  const auto& av = a.value();
  const auto& rv = row.value();
  require(rv.rows == 1 && rv.cols == av.cols, "add_row", "row must be 1xC");
  Matrix<S> out(av.rows, av.cols);
  for (int i = 0; i < av.rows; ++i)
    for (int j = 0; j < av.cols; ++j) out(i, j) = av(i, j) + rv(0, j);
  return make_op(std::move(out), {a, row}, [](const Var<S>& self, const Var<S>& g) {
    return std::vector<Var<S>>{g, needs(self, 1) ? sum_rows(g) : Var<S>()};
  });
}

template <class S>
Var<S> mul_row(const Var<S>& a, const Var<S>& row) {
  const auto& av = a.value();
  const auto& rv = row.value();
  require(rv.rows == 1 && rv.cols == av.cols, "mul_row", "row must be 1xC");
  Matrix<S> out(av.rows, av.cols);
  for (int i = 0; i < av.rows; ++i)
    for (int j = 0; j < av.cols; ++j) out(i, j) = av(i, j) * rv(0, j);
  return make_op(std::move(out), {a, row}, [](const Var<S>& self, const Var<S>& g) {
    return std::vector<Var<S>>{
        needs(self, 0) ? mul_row(g, self.parent(1)) : Var<S>(),
        needs(self, 1) ? sum_rows(mul(g, self.parent(0))) : Var<S>()};
  });
}

template <class S>
Var<S> add_col(const Var<S>& a, const Var<S>& col) {
  const auto& av = a.value();
  const auto& cv = col.value();
  require(cv.cols == 1 && cv.rows == av.rows, "add_col", "col must be Rx1");
  Matrix<S> out(av.rows, av.cols);
  for (int i = 0; i < av.rows; ++i)
    for (int j = 0; j < av.cols; ++j) out(i, j) = av(i, j) + cv(i, 0);
  return make_op(std::move(out), {a, col}, [](const Var<S>& self, const Var<S>& g) {
    return std::vector<Var<S>>{g, needs(self, 1) ? sum_cols(g) : Var<S>()};
  });
}

template <class S>
Var<S> mul_col(const Var<S>& a, const Var<S>& col) {
  const auto& av = a.value();
  const auto& cv = col.value();
  require(cv.cols == 1 && cv.rows == av.rows, "mul_col", "col must be Rx1");
  Matrix<S> out(av.rows, av.cols);
  for (int i = 0; i < av.rows; ++i)
    for (int j = 0; j < av.cols; ++j) out(i, j) = av(i, j) * cv(i, 0);
  return make_op(std::move(out), {a, col}, [](const Var<S>& self, const Var<S>& g) {
    return std::vector<Var<S>>{
        needs(self, 0) ? mul_col(g, self.parent(1)) : Var<S>(),
        needs(self, 1) ? sum_cols(mul(g, self.parent(0))) : Var<S>()};
  });
}

// -------------------------------------------------------------------- products

template <class S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  const auto& A = a.value();
  const auto& B = b.value();
  require(A.cols == B.rows, "matmul", "inner dimensions differ");
  Matrix<S> out(A.rows, B.cols);
  for (int i = 0; i < A.rows; ++i) {
    S* o = out.row(i);
    for (int p = 0; p < A.cols; ++p) {
      const S aip = A(i, p);
      const S* br = B.row(p);
      for (int j = 0; j < B.cols; ++j) o[j] += aip * br[j];
    }
  }
  return make_op(std::move(out), {a, b}, [](const Var<S>& self, const Var<S>& g) {
    return std::vector<Var<S>>{
        needs(self, 0) ? matmul_nt(g, self.parent(1)) : Var<S>(),
        needs(self, 1) ? matmul_tn(self.parent(0), g) : Var<S>()};
  });
}

template <class S>
Var<S> matmul_nt(const Var<S>& a, const Var<S>& b) {
  const auto& A = a.value();
  const auto& B = b.value();
  require(A.cols == B.cols, "matmul_nt", "inner dimensions differ");
  Matrix<S> out(A.rows, B.rows);
  for (int i = 0; i < A.rows; ++i) {
    const S* ar = A.row(i);
    for (int j = 0; j < B.rows; ++j) {
      const S* br = B.row(j);
      S acc{};
      for (int p = 0; p < A.cols; ++p) acc += ar[p] * br[p];
      out(i, j) = acc;
    }
  }
  return make_op(std::move(out), {a, b}, [](const Var<S>& self, const Var<S>& g) {
    return std::vector<Var<S>>{
        needs(self, 0) ? matmul(g, self.parent(1)) : Var<S>(),
        needs(self, 1) ? matmul_tn(g, self.parent(0)) : Var<S>()};
  });
}

template <class S>
Var<S> matmul_tn(const Var<S>& a, const Var<S>& b) {
  const auto& A = a.value();
  const auto& B = b.value();
  require(A.rows == B.rows, "matmul_tn", "inner dimensions differ");
  Matrix<S> out(A.cols, B.cols);
  for (int p = 0; p < A.rows; ++p) {
    const S* ar = A.row(p);
    const S* br = B.row(p);
    for (int i = 0; i < A.cols; ++i) {
      const S api = ar[i];
      S* o = out.row(i);
      for (int j = 0; j < B.cols; ++j) o[j] += api * br[j];
    }
  }
  return make_op(std::move(out), {a, b}, [](const Var<S>& self, const Var<S>& g) {
    return std::vector<Var<S>>{
        needs(self, 0) ? matmul_nt(self.parent(1), g) : Var<S>(),
        needs(self, 1) ? matmul(self.parent(0), g) : Var<S>()};
  });
}

// ------------------------------------------------------------------ reductions

template <class S>
Var<S> sum_all(const Var<S>& a) {
  const auto& av = a.value();
  Matrix<S> out(1, 1);
  for (const S& x : av.data) out.data[0] += x;
  check_finite(out, "sum_all");
  const int r = av.rows;
  const int c = av.cols;
  return make_op(std::move(out), {a}, [r, c](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{expand_all(g, r, c)};
  });
}

template <class S>
Var<S> sum_rows(const Var<S>& a) {
  const auto& av = a.value();
  Matrix<S> out(1, av.cols);
  for (int i = 0; i < av.rows; ++i)
    for (int j = 0; j < av.cols; ++j) out(0, j) += av(i, j);
  check_finite(out, "sum_rows");
  const int r = av.rows;
  return make_op(std::move(out), {a}, [r](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{expand_rows(g, r)};
  });
}

template <class S>
Var<S> sum_cols(const Var<S>& a) {
  const auto& av = a.value();
  Matrix<S> out(av.rows, 1);
  for (int i = 0; i < av.rows; ++i) {
    S acc{};
    const S* ar = av.row(i);
    for (int j = 0; j < av.cols; ++j) acc += ar[j];
    out(i, 0) = acc;
  }
  check_finite(out, "sum_cols");
  const int c = av.cols;
  return make_op(std::move(out), {a}, [c](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{expand_cols(g, c)};
  });
}

template <class S>
Var<S> expand_all(const Var<S>& a, int rows, int cols) {
  require(a.rows() == 1 && a.cols() == 1, "expand_all", "input must be 1x1");
  return make_op(Matrix<S>(rows, cols, a.value().data[0]), {a},
                 [](const Var<S>&, const Var<S>& g) { return std::vector<Var<S>>{sum_all(g)}; });
}

template <class S>
Var<S> expand_rows(const Var<S>& a, int rows) {
  const auto& av = a.value();
  require(av.rows == 1, "expand_rows", "input must be 1xC");
  Matrix<S> out(rows, av.cols);
  for (int i = 0; i < rows; ++i) std::copy(av.row(0), av.row(0) + av.cols, out.row(i));
  return make_op(std::move(out), {a},
                 [](const Var<S>&, const Var<S>& g) { return std::vector<Var<S>>{sum_rows(g)}; });
}

template <class S>
Var<S> expand_cols(const Var<S>& a, int cols) {
  const auto& av = a.value();
  require(av.cols == 1, "expand_cols", "input must be Rx1");
  Matrix<S> out(av.rows, cols);
  for (int i = 0; i < av.rows; ++i) std::fill(out.row(i), out.row(i) + cols, av(i, 0));
  return make_op(std::move(out), {a},
                 [](const Var<S>&, const Var<S>& g) { return std::vector<Var<S>>{sum_cols(g)}; });
}

// ---------------------------------------------------------------- nonlinearity

template <class S>
Var<S> exp(const Var<S>& a) {
  return make_op(map(a.value(), [](const S& x) { return s_exp(x); }), {a},
                 [](const Var<S>& self, const Var<S>& g) {
                   return std::vector<Var<S>>{mul(g, self)};
                 });
}

template <class S>
Var<S> log(const Var<S>& a) {
  return make_op(map(a.value(), [](const S& x) { return s_log(x); }), {a},
                 [](const Var<S>& self, const Var<S>& g) {
                   return std::vector<Var<S>>{mul(g, reciprocal(self.parent(0)))};
                 });
}

template <class S>
Var<S> tanh(const Var<S>& a) {
  return make_op(map(a.value(), [](const S& x) { return s_tanh(x); }), {a},
                 [](const Var<S>& self, const Var<S>& g) {
                   return std::vector<Var<S>>{
                       mul(g, add_scalar(scale(mul(self, self), -1.0), 1.0))};
                 });
}

template <class S>
Var<S> sigmoid(const Var<S>& a) {
  return make_op(map(a.value(),
                     [](const S& x) {
                       // exp of a non-positive argument only, to avoid overflow.
                       if (primal(x) >= 0.0) return S(1.0) / (S(1.0) + s_exp(-x));
                       const S e = s_exp(x);
                       return e / (S(1.0) + e);
                     }),
                 {a}, [](const Var<S>& self, const Var<S>& g) {
                   return std::vector<Var<S>>{
                       mul(g, mul(self, add_scalar(scale(self, -1.0), 1.0)))};
                 });
}

template <class S>
Var<S> rsqrt(const Var<S>& a) {
  return make_op(map(a.value(), [](const S& x) { return S(1.0) / s_sqrt(x); }), {a},
                 [](const Var<S>& self, const Var<S>& g) {
                   return std::vector<Var<S>>{mul(g, scale(mul(self, mul(self, self)), -0.5))};
                 });
}

template <class S>
Var<S> reciprocal(const Var<S>& a) {
  return make_op(map(a.value(), [](const S& x) { return S(1.0) / x; }), {a},
                 [](const Var<S>& self, const Var<S>& g) {
                   return std::vector<Var<S>>{mul(g, scale(mul(self, self), -1.0))};
                 });
}

// -------------------------------------------------------------------- indexing

template <class S>
Var<S> gather_rows(const Var<S>& table, std::span<const int> ids) {
  const auto& tv = table.value();
  Matrix<S> out(static_cast<int>(ids.size()), tv.cols);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < tv.rows, "gather_rows", "index out of range");
    std::copy(tv.row(ids[i]), tv.row(ids[i]) + tv.cols, out.row(static_cast<int>(i)));
  }
  auto idx = std::make_shared<std::vector<int>>(ids.begin(), ids.end());
  const int n = tv.rows;
  return make_op(std::move(out), {table}, [idx, n](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{scatter_rows(g, std::span<const int>(*idx), n)};
  });
}

template <class S>
Var<S> scatter_rows(const Var<S>& a, std::span<const int> ids, int rows) {
  const auto& av = a.value();
  require(static_cast<int>(ids.size()) == av.rows, "scatter_rows", "one index per row required");
  Matrix<S> out(rows, av.cols);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < rows, "scatter_rows", "index out of range");
    const S* src = av.row(static_cast<int>(i));
    S* dst = out.row(ids[i]);
    for (int j = 0; j < av.cols; ++j) dst[j] += src[j];
  }
  auto idx = std::make_shared<std::vector<int>>(ids.begin(), ids.end());
  return make_op(std::move(out), {a}, [idx](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{gather_rows(g, std::span<const int>(*idx))};
  });
}

template <class S>
Var<S> slice_cols(const Var<S>& a, int start, int len) {
  const auto& av = a.value();
  require(start >= 0 && len >= 0 && start + len <= av.cols, "slice_cols", "range out of bounds");
  Matrix<S> out(av.rows, len);
  for (int i = 0; i < av.rows; ++i) std::copy(av.row(i) + start, av.row(i) + start + len, out.row(i));
  const int total = av.cols;
  return make_op(std::move(out), {a}, [start, total](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{pad_cols(g, start, total)};
  });
}

template <class S>
Var<S> pad_cols(const Var<S>& a, int start, int total) {
  const auto& av = a.value();
  require(start >= 0 && start + av.cols <= total, "pad_cols", "range out of bounds");
  Matrix<S> out(av.rows, total);
  for (int i = 0; i < av.rows; ++i) std::copy(av.row(i), av.row(i) + av.cols, out.row(i) + start);
  const int len = av.cols;
  return make_op(std::move(out), {a}, [start, len](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{slice_cols(g, start, len)};
  });
}

// ------------------------------------------------------------------- piecewise

template <class S>
Var<S> clamp(const Var<S>& a, double lo, double hi) {
  const auto& av = a.value();
  Matrix<S> out(av.rows, av.cols);
  Matrix<S> pass(av.rows, av.cols);
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double x = primal(av.data[i]);
    if (x < lo) {
      out.data[i] = S(lo);
    } else if (x > hi) {
      out.data[i] = S(hi);
    } else {
      out.data[i] = av.data[i];
      pass.data[i] = S(1.0);
    }
  }
  auto mask = std::make_shared<Matrix<S>>(std::move(pass));
  return make_op(std::move(out), {a}, [mask](const Var<S>&, const Var<S>& g) {
    return std::vector<Var<S>>{mul(g, constant(*mask))};
  });
}

template <class S>
Var<S> minimum(const Var<S>& a, const Var<S>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require(av.same_shape(bv), "minimum", "shape mismatch");
  Matrix<S> out(av.rows, av.cols);
  Matrix<S> pick_a(av.rows, av.cols);
  Matrix<S> pick_b(av.rows, av.cols);
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (primal(av.data[i]) <= primal(bv.data[i])) {
      out.data[i] = av.data[i];
      pick_a.data[i] = S(1.0);
    } else {
      out.data[i] = bv.data[i];
      pick_b.data[i] = S(1.0);
    }
  }
  auto ma = std::make_shared<Matrix<S>>(std::move(pick_a));
  auto mb = std::make_shared<Matrix<S>>(std::move(pick_b));
  return make_op(std::move(out), {a, b}, [ma, mb](const Var<S>& self, const Var<S>& g) {
    return std::vector<Var<S>>{needs(self, 0) ? mul(g, constant(*ma)) : Var<S>(),
                               needs(self, 1) ? mul(g, constant(*mb)) : Var<S>()};
  });
}

// -------------------------------------------------------------------- backward

template <class S>
std::vector<Var<S>> gradients(const Var<S>& output, std::span<const Var<S>> inputs,
                              bool create_graph, bool stop_at_inputs) {
  require(output.rows() == 1 && output.cols() == 1, "gradients", "output must be 1x1");

  // Iterative post-order DFS over nodes that require grad.
  std::unordered_map<const Node<S>*, bool> wanted;
  for (const auto& in : inputs) wanted[in.get()] = true;

  std::vector<Var<S>> order;
  std::unordered_map<const Node<S>*, std::size_t> slot;
  if (output.requires_grad()) {
    std::unordered_map<const Node<S>*, bool> visited;
    std::vector<std::pair<Var<S>, std::size_t>> stack;
    stack.emplace_back(output, 0);
    visited[output.get()] = true;
    while (!stack.empty()) {
      auto& [var, next] = stack.back();
      Node<S>* node = var.get();
      const bool expand = !(stop_at_inputs && wanted.count(node));
      if (expand && next < node->parents.size()) {
        const Var<S>& p = node->parents[next++];
        if (p.requires_grad() && !visited[p.get()]) {
          visited[p.get()] = true;
          stack.emplace_back(p, 0);
        }
      } else {
        slot[node] = order.size();
        order.push_back(var);
        stack.pop_back();
      }
    }
  }

  std::vector<Var<S>> grads(order.size());
  {
    GradModeGuard mode(create_graph);
    if (!order.empty()) grads.back() = scalar<S>(S(1.0));
    for (std::size_t i = order.size(); i-- > 0;) {
      const Var<S>& self = order[i];
      Node<S>* node = self.get();
      if (!grads[i].defined() || !node->backward) continue;
      if (stop_at_inputs && wanted.count(node)) continue;
      std::vector<Var<S>> parent_grads = node->backward(self, grads[i]);
      for (std::size_t p = 0; p < parent_grads.size(); ++p) {
        const Var<S>& pg = parent_grads[p];
        const Var<S>& parent = node->parents[p];
        if (!pg.defined() || !parent.requires_grad()) continue;
        Var<S>& acc = grads[slot.at(parent.get())];
        acc = acc.defined() ? add(acc, pg) : pg;
      }
      // Interior gradients are no longer needed once propagated, unless an
      // input asks for them.
      if (!wanted.count(node)) grads[i] = Var<S>();
    }
  }

  std::vector<Var<S>> result;
  result.reserve(inputs.size());
  for (const auto& in : inputs) {
    auto it = slot.find(in.get());
    if (it != slot.end() && grads[it->second].defined()) {
      result.push_back(create_graph ? grads[it->second] : detach(grads[it->second]));
    } else {
      result.push_back(zeros_like(in));
    }
  }
  return result;
}

// ------------------------------------------------------------- instantiations

#define MASS_INSTANTIATE(S)                                                              \
  template struct Node<S>;                                                               \
  template class Var<S>;                                                                 \
  template Var<S> constant(Matrix<S>);                                                   \
  template Var<S> leaf(Matrix<S>);                                                       \
  template Var<S> detach(const Var<S>&);                                                 \
  template Var<S> scalar(S);                                                             \
  template Var<S> zeros_like(const Var<S>&);                                             \
  template Var<S> add(const Var<S>&, const Var<S>&);                                     \
  template Var<S> sub(const Var<S>&, const Var<S>&);                                     \
  template Var<S> mul(const Var<S>&, const Var<S>&);                                     \
  template Var<S> scale(const Var<S>&, double);                                          \
  template Var<S> add_scalar(const Var<S>&, double);                                     \
  template Var<S> mul_scalar(const Var<S>&, const Var<S>&);                              \
  template Var<S> add_row(const Var<S>&, const Var<S>&);                                 \
  template Var<S> mul_row(const Var<S>&, const Var<S>&);                                 \
  template Var<S> add_col(const Var<S>&, const Var<S>&);                                 \
  template Var<S> mul_col(const Var<S>&, const Var<S>&);                                 \
  template Var<S> matmul(const Var<S>&, const Var<S>&);                                  \
  template Var<S> matmul_nt(const Var<S>&, const Var<S>&);                               \
  template Var<S> matmul_tn(const Var<S>&, const Var<S>&);                               \
  template Var<S> sum_all(const Var<S>&);                                                \
  template Var<S> sum_rows(const Var<S>&);                                               \
  template Var<S> sum_cols(const Var<S>&);                                               \
  template Var<S> expand_all(const Var<S>&, int, int);                                   \
  template Var<S> expand_rows(const Var<S>&, int);                                       \
  template Var<S> expand_cols(const Var<S>&, int);                                       \
  template Var<S> exp(const Var<S>&);                                                    \
  template Var<S> log(const Var<S>&);                                                    \
  template Var<S> tanh(const Var<S>&);                                                   \
  template Var<S> sigmoid(const Var<S>&);                                                \
  template Var<S> rsqrt(const Var<S>&);                                                  \
  template Var<S> reciprocal(const Var<S>&);                                             \
  template Var<S> gather_rows(const Var<S>&, std::span<const int>);                      \
  template Var<S> scatter_rows(const Var<S>&, std::span<const int>, int);                \
  template Var<S> slice_cols(const Var<S>&, int, int);                                   \
  template Var<S> pad_cols(const Var<S>&, int, int);                                     \
  template Var<S> clamp(const Var<S>&, double, double);                                  \
  template Var<S> minimum(const Var<S>&, const Var<S>&);                                 \
  template std::vector<Var<S>> gradients(const Var<S>&, std::span<const Var<S>>, bool, bool);

MASS_INSTANTIATE(double)
MASS_INSTANTIATE(Dual)

#undef MASS_INSTANTIATE

}  // namespace mass::ad
