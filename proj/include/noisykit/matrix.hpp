#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace noisykit {

/// Minimal dense row-major matrix of doubles. Used for transition matrices,
/// revision deltas and estimator output; not a linear-algebra library.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Mat from_rows(const std::vector<std::vector<double>>& r) {
    if (r.empty()) throw std::invalid_argument("matrix needs at least one row");
    Mat m(r.size(), r[0].size());
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (r[i].size() != m.cols) throw std::invalid_argument("ragged matrix rows");
      for (std::size_t j = 0; j < m.cols; ++j) m(i, j) = r[i][j];
    }
    return m;
  }

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline Mat operator+(const Mat& a, const Mat& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("matrix shape mismatch in addition");
  Mat out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] + b.data[i];
  return out;
}

/// Determinant via LU decomposition with partial pivoting. Square input.
inline double determinant(const Mat& m) {
  if (m.rows != m.cols) throw std::invalid_argument("determinant of non-square matrix");
  const std::size_t n = m.rows;
  Mat a = m;
  double det = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::fabs(a(r, col)) > std::fabs(a(pivot, col))) pivot = r;
    if (a(pivot, col) == 0.0) return 0.0;
    if (pivot != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(pivot, j), a(col, j));
      det = -det;
    }
    det *= a(col, col);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a(r, col) / a(col, col);
      for (std::size_t j = col; j < n; ++j) a(r, j) -= f * a(col, j);
    }
  }
  return det;
}

}  // namespace noisykit
