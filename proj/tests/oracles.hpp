#pragma once

// Test-only reference computations, independent of the differentiation engine.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "mass/param_vector.hpp"

namespace mass::testing {

/// Central finite differences of a scalar function of a flat vector.
inline std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                              std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = f(x);
    x[i] = orig - h;
    const double down = f(x);
    x[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// max |a - b| / max(max |a|, max |b|).
inline double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  }
  return scale == 0.0 ? diff : diff / scale;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
  return diff;
}

inline ParamVector random_like(const LayoutPtr& layout, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  ParamVector v(layout);
  for (std::size_t s = 0; s < v.num_segments(); ++s)
    for (double& x : v[s].data) x = n(rng);
  return v;
}

}  // namespace mass::testing
