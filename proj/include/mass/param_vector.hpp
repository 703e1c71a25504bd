#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mass/graph.hpp"
#include "mass/matrix.hpp"

namespace mass {

struct SegmentShape {
  std::string name;
  int rows = 0;
  int cols = 0;

  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
  bool operator==(const SegmentShape&) const = default;
};

/// Ordered, uniquely named segment shapes shared by every vector of one kind.
class Layout {
 public:
  explicit Layout(std::vector<SegmentShape> segments);

  std::size_t num_segments() const { return segments_.size(); }
  const SegmentShape& segment(std::size_t i) const { return segments_[i]; }
  const std::vector<SegmentShape>& segments() const { return segments_; }
  std::size_t total_size() const { return total_; }

  /// Index of `name`; throws ContractError when absent.
  std::size_t index_of(std::string_view name) const;
  bool contains(std::string_view name) const;

  bool operator==(const Layout& o) const { return segments_ == o.segments_; }

 private:
  std::vector<SegmentShape> segments_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t total_ = 0;
};

using LayoutPtr = std::shared_ptr<const Layout>;

LayoutPtr make_layout(std::vector<SegmentShape> segments);

/// Named, shape-tagged segments of double-precision parameters.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(LayoutPtr layout);  // zero-filled

  const LayoutPtr& layout() const { return layout_; }
  std::size_t num_segments() const { return values_.size(); }
  std::size_t total_size() const { return layout_ ? layout_->total_size() : 0; }

  MatrixD& operator[](std::size_t i) { return values_[i]; }
  const MatrixD& operator[](std::size_t i) const { return values_[i]; }
  MatrixD& at(std::string_view name) { return values_[layout_->index_of(name)]; }
  const MatrixD& at(std::string_view name) const { return values_[layout_->index_of(name)]; }
  const std::string& name(std::size_t i) const { return layout_->segment(i).name; }

  bool same_layout(const ParamVector& o) const;

  std::vector<double> flatten() const;
  static ParamVector unflatten(LayoutPtr layout, std::span<const double> flat);

  ParamVector& operator+=(const ParamVector& o);
  ParamVector& operator-=(const ParamVector& o);
  ParamVector& operator*=(double k);
  /// this += k * o
  ParamVector& axpy(double k, const ParamVector& o);

  double dot(const ParamVector& o) const;
  double norm() const;
  double max_abs() const;

  /// FNV-1a over the raw bytes of every segment, in layout order.
  std::uint64_t hash() const;
  /// Hash restricted to the named segments.
  std::uint64_t hash_segments(std::span<const std::string> names) const;

  /// Bit-for-bit equality of layout and contents.
  bool bit_equal(const ParamVector& o) const;

  /// Throws NumericFault naming the first non-finite segment.
  void check_finite(std::string_view context) const;

 private:
  void require_same_layout(const ParamVector& o, const char* op) const;

  LayoutPtr layout_;
  std::vector<MatrixD> values_;
};

ParamVector operator+(ParamVector a, const ParamVector& b);
ParamVector operator-(ParamVector a, const ParamVector& b);
ParamVector operator*(double k, ParamVector a);

/// Graph variables aligned with a layout.
template <class S>
class ParamVars {
 public:
  using scalar_type = S;

  ParamVars() = default;
  ParamVars(LayoutPtr layout, std::vector<ad::Var<S>> vars)
      : layout_(std::move(layout)), vars_(std::move(vars)) {}

  const LayoutPtr& layout() const { return layout_; }
  std::size_t size() const { return vars_.size(); }
  const ad::Var<S>& operator[](std::size_t i) const { return vars_[i]; }
  const ad::Var<S>& at(std::string_view name) const { return vars_[layout_->index_of(name)]; }
  bool contains(std::string_view name) const { return layout_ && layout_->contains(name); }
  const std::vector<ad::Var<S>>& vars() const { return vars_; }

 private:
  LayoutPtr layout_;
  std::vector<ad::Var<S>> vars_;
};

/// Leaves requiring grad.
template <class S>
ParamVars<S> make_leaves(const ParamVector& x);

/// Constants: participate in evaluation but never receive gradients.
template <class S>
ParamVars<S> make_constants(const ParamVector& x);

/// Dual leaves carrying `tangent` as the forward direction.
ParamVars<Dual> make_dual_leaves(const ParamVector& x, const ParamVector& tangent);

/// Collects primal values (or tangents) of variables back into a ParamVector.
template <class S>
ParamVector values_of(const LayoutPtr& layout, std::span<const ad::Var<S>> vars);
ParamVector tangents_of(const LayoutPtr& layout, std::span<const ad::Var<Dual>> vars);

}  // namespace mass
