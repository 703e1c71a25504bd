#include "mass/nn.hpp"

#include <cmath>

namespace mass::nn {

using ad::Var;

void append_block_shapes(std::vector<SegmentShape>& out, const std::string& prefix, int width,
                         int ffn_width) {
  out.push_back({prefix + ".ln1.g", 1, width});
  out.push_back({prefix + ".ln1.b", 1, width});
  for (const char* m : {"q", "k", "v", "o"}) out.push_back({prefix + ".attn." + m, width, width});
  out.push_back({prefix + ".ln2.g", 1, width});
  out.push_back({prefix + ".ln2.b", 1, width});
  out.push_back({prefix + ".ffn.w1", ffn_width, width});
  out.push_back({prefix + ".ffn.b1", 1, ffn_width});
  out.push_back({prefix + ".ffn.w2", width, ffn_width});
  out.push_back({prefix + ".ffn.b2", 1, width});
}

std::vector<std::string> adapted_projections(const std::string& prefix) {
  return {prefix + ".attn.q", prefix + ".attn.k", prefix + ".attn.v", prefix + ".attn.o"};
}

template <class S>
Var<S> layer_norm(const Var<S>& x, const Var<S>& gain, const Var<S>& bias) {
  const double inv = 1.0 / x.cols();
  const auto mean = ad::scale(ad::sum_cols(x), inv);
  const auto centered = ad::add_col(x, ad::scale(mean, -1.0));
  const auto var = ad::scale(ad::sum_cols(ad::mul(centered, centered)), inv);
  const auto normed = ad::mul_col(centered, ad::rsqrt(ad::add_scalar(var, 1e-5)));
  return ad::add_row(ad::mul_row(normed, gain), bias);
}

namespace {

// Per-row maximum as a constant shift; softmax is invariant to it.
template <class S>
Var<S> row_shift(const Var<S>& x) {
  const auto& v = x.value();
  Matrix<S> shift(v.rows, 1);
  for (int i = 0; i < v.rows; ++i) {
    double m = primal(v(i, 0));
    for (int j = 1; j < v.cols; ++j) m = std::max(m, primal(v(i, j)));
    shift(i, 0) = S(-m);
  }
  return ad::constant(std::move(shift));
}

template <class S>
Var<S> causal_mask(int n) {
  Matrix<S> m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) m(i, j) = S(-1e30);
  return ad::constant(std::move(m));
}

}  // namespace

template <class S>
Var<S> softmax_rows(const Var<S>& x) {
  const auto e = ad::exp(ad::add_col(x, row_shift(x)));
  return ad::mul_col(e, ad::reciprocal(ad::sum_cols(e)));
}

template <class S>
Var<S> log_softmax_rows(const Var<S>& x) {
  const auto z = ad::add_col(x, row_shift(x));
  const auto lse = ad::log(ad::sum_cols(ad::exp(z)));
  return ad::add_col(z, ad::scale(lse, -1.0));
}

template <class S>
Var<S> project(const Var<S>& x, const ParamVars<S>& params, const std::string& name,
               const Adapters<S>& adapters) {
  Var<S> y = ad::matmul_nt(x, params.at(name));
  if (adapters.vars != nullptr && adapters.vars->contains(name + ".A")) {
    const auto& a = adapters.vars->at(name + ".A");
    const auto& b = adapters.vars->at(name + ".B");
    y = ad::add(y, ad::scale(ad::matmul_nt(ad::matmul_nt(x, a), b), adapters.scale));
  }
  return y;
}

template <class S>
Var<S> block(const Var<S>& x, const ParamVars<S>& params, const std::string& prefix, int heads,
             bool causal, const Adapters<S>& adapters) {
  const int width = x.cols();
  const int head_width = width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_width));

  const auto z = layer_norm(x, params.at(prefix + ".ln1.g"), params.at(prefix + ".ln1.b"));
  const auto q = project(z, params, prefix + ".attn.q", adapters);
  const auto k = project(z, params, prefix + ".attn.k", adapters);
  const auto v = project(z, params, prefix + ".attn.v", adapters);
  const Var<S> mask = causal ? causal_mask<S>(x.rows()) : Var<S>();

  Var<S> merged;
  for (int h = 0; h < heads; ++h) {
    const int off = h * head_width;
    auto scores = ad::scale(ad::matmul_nt(ad::slice_cols(q, off, head_width),
                                          ad::slice_cols(k, off, head_width)),
                            inv_sqrt);
    if (causal) scores = ad::add(scores, mask);
    const auto out = ad::matmul(softmax_rows(scores), ad::slice_cols(v, off, head_width));
    const auto placed = heads == 1 ? out : ad::pad_cols(out, off, width);
    merged = merged.defined() ? ad::add(merged, placed) : placed;
  }
  const auto h1 = ad::add(x, project(merged, params, prefix + ".attn.o", adapters));

  const auto z2 = layer_norm(h1, params.at(prefix + ".ln2.g"), params.at(prefix + ".ln2.b"));
  const auto hidden =
      ad::tanh(ad::add_row(ad::matmul_nt(z2, params.at(prefix + ".ffn.w1")), params.at(prefix + ".ffn.b1")));
  const auto ffn =
      ad::add_row(ad::matmul_nt(hidden, params.at(prefix + ".ffn.w2")), params.at(prefix + ".ffn.b2"));
  return ad::add(h1, ffn);
}

#define MASS_NN_INSTANTIATE(S)                                                             \
  template Var<S> layer_norm(const Var<S>&, const Var<S>&, const Var<S>&);                 \
  template Var<S> softmax_rows(const Var<S>&);                                             \
  template Var<S> log_softmax_rows(const Var<S>&);                                         \
  template Var<S> project(const Var<S>&, const ParamVars<S>&, const std::string&,          \
                          const Adapters<S>&);                                             \
  template Var<S> block(const Var<S>&, const ParamVars<S>&, const std::string&, int, bool, \
                        const Adapters<S>&);

MASS_NN_INSTANTIATE(double)
MASS_NN_INSTANTIATE(Dual)

#undef MASS_NN_INSTANTIATE

}  // namespace mass::nn
