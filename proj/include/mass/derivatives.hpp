#pragma once

// First- and second-order derivatives of scalar functions of ParamVectors.
//
// A differentiable scalar is any callable that maps graph variables to a 1x1
// variable and is generic over the scalar type, e.g. a lambda taking
// `const auto&`. Second-order products are forward-over-reverse: the reverse
// pass runs over dual numbers seeded with the direction, so the Hessian is
// never formed.

#include <cmath>
#include <concepts>
#include <span>

#include "mass/errors.hpp"
#include "mass/graph.hpp"
#include "mass/param_vector.hpp"

namespace mass {

template <class F>
concept DifferentiableScalar = requires(const F& f, const ParamVars<double>& a,
                                        const ParamVars<Dual>& b) {
  { f(a) } -> std::same_as<ad::Var<double>>;
  { f(b) } -> std::same_as<ad::Var<Dual>>;
};

template <class F>
concept DifferentiableScalar2 = requires(const F& f, const ParamVars<double>& a,
                                         const ParamVars<Dual>& b) {
  { f(a, a) } -> std::same_as<ad::Var<double>>;
  { f(b, b) } -> std::same_as<ad::Var<Dual>>;
};

struct ValueAndGrad {
  double value = 0.0;
  ParamVector grad;
};

namespace detail {

inline void check_output(double v, const char* context) {
  if (!std::isfinite(v)) throw NumericFault(context, "non-finite function value");
}

}  // namespace detail

template <DifferentiableScalar F>
ValueAndGrad value_and_grad(const F& f, const ParamVector& x) {
  x.check_finite("grad/input");
  ad::GradModeGuard on(true);
  const auto vars = make_leaves<double>(x);
  const ad::Var<double> y = f(vars);
  detail::check_output(y.item(), "grad/value");
  const auto g = ad::gradients(y, std::span(vars.vars()));
  ValueAndGrad out{y.item(), values_of<double>(x.layout(), g)};
  out.grad.check_finite("grad");
  return out;
}

template <DifferentiableScalar F>
ParamVector grad(const F& f, const ParamVector& x) {
  return value_and_grad(f, x).grad;
}

/// H(x) v as the tangent of the gradient along v.
template <DifferentiableScalar F>
ParamVector hvp(const F& f, const ParamVector& x, const ParamVector& v) {
  if (!x.same_layout(v)) throw ContractError("hvp: direction layout differs from x");
  x.check_finite("hvp/input");
  ad::GradModeGuard on(true);
  const auto vars = make_dual_leaves(x, v);
  const ad::Var<Dual> y = f(vars);
  detail::check_output(y.item().v, "hvp/value");
  const auto g = ad::gradients(y, std::span(vars.vars()));
  ParamVector out = tangents_of(x.layout(), g);
  out.check_finite("hvp");
  return out;
}

/// Everything one forward-over-reverse pass over f(x, y) with x-direction
/// `lambda` yields: the value, both gradients, H_xx lambda and H_yx lambda.
struct SecondOrderPass {
  double value = 0.0;
  ParamVector grad_x;
  ParamVector grad_y;
  ParamVector hvp_x;
  ParamVector mixed_y;
};

template <DifferentiableScalar2 F>
SecondOrderPass forward_over_reverse(const F& f, const ParamVector& x, const ParamVector& y,
                                     const ParamVector& lambda) {
  if (!x.same_layout(lambda)) throw ContractError("mixed_partial: lambda layout differs from x");
  x.check_finite("mixed/x");
  y.check_finite("mixed/y");
  ad::GradModeGuard on(true);
  const auto xv = make_dual_leaves(x, lambda);
  const auto yv = make_dual_leaves(y, ParamVector(y.layout()));
  const ad::Var<Dual> out = f(xv, yv);
  detail::check_output(out.item().v, "mixed/value");

  std::vector<ad::Var<Dual>> all = xv.vars();
  all.insert(all.end(), yv.vars().begin(), yv.vars().end());
  const auto g = ad::gradients(out, std::span<const ad::Var<Dual>>(all));
  const std::span<const ad::Var<Dual>> gx(g.data(), xv.size());
  const std::span<const ad::Var<Dual>> gy(g.data() + xv.size(), yv.size());

  SecondOrderPass r{out.item().v, values_of<Dual>(x.layout(), gx), values_of<Dual>(y.layout(), gy),
                    tangents_of(x.layout(), gx), tangents_of(y.layout(), gy)};
  r.hvp_x.check_finite("mixed/hvp");
  r.mixed_y.check_finite("mixed/partial");
  return r;
}

/// grad_y <grad_x f(x, y), lambda> with lambda held constant.
template <DifferentiableScalar2 F>
ParamVector mixed_partial(const F& f, const ParamVector& x, const ParamVector& y,
                          const ParamVector& lambda) {
  return forward_over_reverse(f, x, y, lambda).mixed_y;
}

}  // namespace mass
