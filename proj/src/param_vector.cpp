#include "mass/param_vector.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "mass/errors.hpp"

namespace mass {

Layout::Layout(std::vector<SegmentShape> segments) : segments_(std::move(segments)) {
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const auto& s = segments_[i];
    if (s.rows < 0 || s.cols < 0) throw ContractError("layout: negative shape for " + s.name);
    if (!index_.emplace(s.name, i).second) throw ContractError("layout: duplicate segment " + s.name);
    total_ += s.size();
  }
}

std::size_t Layout::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ContractError("layout: no segment named " + std::string(name));
  return it->second;
}

bool Layout::contains(std::string_view name) const { return index_.count(std::string(name)) > 0; }

LayoutPtr make_layout(std::vector<SegmentShape> segments) {
  return std::make_shared<const Layout>(std::move(segments));
}

ParamVector::ParamVector(LayoutPtr layout) : layout_(std::move(layout)) {
  values_.reserve(layout_->num_segments());
  for (const auto& s : layout_->segments()) values_.emplace_back(s.rows, s.cols);
}

bool ParamVector::same_layout(const ParamVector& o) const {
  if (layout_ == o.layout_) return true;
  return layout_ && o.layout_ && *layout_ == *o.layout_;
}

void ParamVector::require_same_layout(const ParamVector& o, const char* op) const {
  if (!same_layout(o)) throw ContractError(std::string(op) + ": segment layouts differ");
}

std::vector<double> ParamVector::flatten() const {
  std::vector<double> out;
  out.reserve(total_size());
  for (const auto& m : values_) out.insert(out.end(), m.data.begin(), m.data.end());
  return out;
}

ParamVector ParamVector::unflatten(LayoutPtr layout, std::span<const double> flat) {
  if (flat.size() != layout->total_size()) throw ContractError("unflatten: length mismatch");
  ParamVector out(std::move(layout));
  std::size_t off = 0;
  for (auto& m : out.values_) {
    std::copy(flat.begin() + off, flat.begin() + off + m.size(), m.data.begin());
    off += m.size();
  }
  return out;
}

ParamVector& ParamVector::operator+=(const ParamVector& o) { return axpy(1.0, o); }
ParamVector& ParamVector::operator-=(const ParamVector& o) { return axpy(-1.0, o); }

ParamVector& ParamVector::operator*=(double k) {
  for (auto& m : values_)
    for (double& x : m.data) x *= k;
  return *this;
}

ParamVector& ParamVector::axpy(double k, const ParamVector& o) {
  require_same_layout(o, "axpy");
  for (std::size_t s = 0; s < values_.size(); ++s) {
    auto& a = values_[s].data;
    const auto& b = o.values_[s].data;
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += k * b[i];
  }
  return *this;
}

double ParamVector::dot(const ParamVector& o) const {
  require_same_layout(o, "dot");
  double acc = 0.0;
  for (std::size_t s = 0; s < values_.size(); ++s) {
    const auto& a = values_[s].data;
    const auto& b = o.values_[s].data;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  }
  return acc;
}

double ParamVector::norm() const { return std::sqrt(dot(*this)); }

double ParamVector::max_abs() const {
  double m = 0.0;
  for (const auto& v : values_)
    for (double x : v.data) m = std::max(m, std::abs(x));
  return m;
}

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::uint64_t fnv_bytes(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

}  // namespace

std::uint64_t ParamVector::hash() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& m : values_) h = fnv_bytes(h, m.data.data(), m.size() * sizeof(double));
  return h;
}

std::uint64_t ParamVector::hash_segments(std::span<const std::string> names) const {
  std::uint64_t h = kFnvOffset;
  for (const auto& n : names) {
    const auto& m = at(n);
    h = fnv_bytes(h, m.data.data(), m.size() * sizeof(double));
  }
  return h;
}

bool ParamVector::bit_equal(const ParamVector& o) const {
  if (!same_layout(o)) return false;
  for (std::size_t s = 0; s < values_.size(); ++s) {
    const auto& a = values_[s].data;
    const auto& b = o.values_[s].data;
    if (std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

void ParamVector::check_finite(std::string_view context) const {
  for (std::size_t s = 0; s < values_.size(); ++s) {
    for (double x : values_[s].data) {
      if (!std::isfinite(x)) {
        throw NumericFault(std::string(context) + "/" + name(s), "non-finite value");
      }
    }
  }
}

ParamVector operator+(ParamVector a, const ParamVector& b) { return a += b; }
ParamVector operator-(ParamVector a, const ParamVector& b) { return a -= b; }
ParamVector operator*(double k, ParamVector a) { return a *= k; }

template <class S>
ParamVars<S> make_leaves(const ParamVector& x) {
  std::vector<ad::Var<S>> vars;
  vars.reserve(x.num_segments());
  for (std::size_t i = 0; i < x.num_segments(); ++i) vars.push_back(ad::leaf(lift<S>(x[i])));
  return {x.layout(), std::move(vars)};
}

template <class S>
ParamVars<S> make_constants(const ParamVector& x) {
  std::vector<ad::Var<S>> vars;
  vars.reserve(x.num_segments());
  for (std::size_t i = 0; i < x.num_segments(); ++i) vars.push_back(ad::constant(lift<S>(x[i])));
  return {x.layout(), std::move(vars)};
}

ParamVars<Dual> make_dual_leaves(const ParamVector& x, const ParamVector& tangent) {
  if (!x.same_layout(tangent)) throw ContractError("make_dual_leaves: tangent layout differs");
  std::vector<ad::Var<Dual>> vars;
  vars.reserve(x.num_segments());
  for (std::size_t i = 0; i < x.num_segments(); ++i) {
    vars.push_back(ad::leaf(lift_with_tangent(x[i], tangent[i])));
  }
  return {x.layout(), std::move(vars)};
}

template <class S>
ParamVector values_of(const LayoutPtr& layout, std::span<const ad::Var<S>> vars) {
  ParamVector out(layout);
  for (std::size_t i = 0; i < vars.size(); ++i) out[i] = primal_of(vars[i].value());
  return out;
}

ParamVector tangents_of(const LayoutPtr& layout, std::span<const ad::Var<Dual>> vars) {
  ParamVector out(layout);
  for (std::size_t i = 0; i < vars.size(); ++i) out[i] = tangent_of(vars[i].value());
  return out;
}

template ParamVars<double> make_leaves<double>(const ParamVector&);
template ParamVars<Dual> make_leaves<Dual>(const ParamVector&);
template ParamVars<double> make_constants<double>(const ParamVector&);
template ParamVars<Dual> make_constants<Dual>(const ParamVector&);
template ParamVector values_of<double>(const LayoutPtr&, std::span<const ad::Var<double>>);
template ParamVector values_of<Dual>(const LayoutPtr&, std::span<const ad::Var<Dual>>);

}  // namespace mass
