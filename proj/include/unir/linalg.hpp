#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace unir {

// Single-precision embedding vector as stored and searched.
using Vector = std::vector<float>;

// Row-major dense matrix of doubles; holds trainable parameters.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }
inline double norm(std::span<const float> a) { return std::sqrt(dot(a, a)); }

// y = M x
inline std::vector<double> matvec(const Matrix& m, std::span<const double> x) {
  std::vector<double> y(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) y[r] = dot(m.row(r), x);
  return y;
}

// In-place L2 normalization; the zero vector is left untouched.
inline void normalize_in_place(std::vector<double>& v) {
  const double n = norm(v);
  if (n > 0.0)
    for (double& x : v) x /= n;
}

inline bool is_zero(std::span<const float> v) {
  for (float x : v)
    if (x != 0.0f) return false;
  return true;
}

inline bool all_finite(std::span<const float> v) {
  for (float x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline Vector to_float(std::span<const double> v) { return Vector(v.begin(), v.end()); }
inline std::vector<double> to_double(std::span<const float> v) {
  return std::vector<double>(v.begin(), v.end());
}

}  // namespace unir
