#pragma once

#include <cstddef>
#include <vector>

#include "mass/dual.hpp"

namespace mass {

// Dense row-major matrix over a scalar type (double or Dual).
template <class S>
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<S> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c) {}
  Matrix(int r, int c, S fill) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  std::size_t size() const { return data.size(); }
  S& operator()(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
  const S& operator()(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }
  S* row(int i) { return data.data() + static_cast<std::size_t>(i) * cols; }
  const S* row(int i) const { return data.data() + static_cast<std::size_t>(i) * cols; }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

using MatrixD = Matrix<double>;

template <class S>
Matrix<S> lift(const MatrixD& m) {
  Matrix<S> out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.size(); ++i) out.data[i] = S(m.data[i]);
  return out;
}

inline Matrix<Dual> lift_with_tangent(const MatrixD& value, const MatrixD& tangent) {
  Matrix<Dual> out(value.rows, value.cols);
  for (std::size_t i = 0; i < value.size(); ++i) out.data[i] = Dual(value.data[i], tangent.data[i]);
  return out;
}

template <class S>
MatrixD primal_of(const Matrix<S>& m) {
  MatrixD out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.size(); ++i) out.data[i] = primal(m.data[i]);
  return out;
}

template <class S>
MatrixD tangent_of(const Matrix<S>& m) {
  MatrixD out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.size(); ++i) out.data[i] = tangent(m.data[i]);
  return out;
}

}  // namespace mass
