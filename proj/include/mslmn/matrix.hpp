#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "mslmn/errors.hpp"

namespace mslmn {

// Dense row-major matrix with explicit dimensions. A vector is carried either
// as a std::vector<T> or as a one-column / one-row matrix, depending on what
// reads more naturally at the call site.
template <std::floating_point T>
class BasicMatrix {
 public:
  using value_type = T;

  BasicMatrix() = default;

  BasicMatrix(std::size_t rows, std::size_t cols, T fill = T{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                           " does not match " + std::to_string(rows_) + "x" +
                           std::to_string(cols_));
    }
  }

  // Nested row list: {{1, 2}, {3, 4}}.
  BasicMatrix(std::initializer_list<std::initializer_list<T>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& row : rows) {
      if (row.size() != cols_) throw DimensionError("ragged matrix initializer");
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  static BasicMatrix identity(std::size_t n) {
    BasicMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
    return m;
  }

  static BasicMatrix diagonal(std::span<const T> values) {
    BasicMatrix m(values.size(), values.size());
    for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
    return m;
  }

  static BasicMatrix column(std::span<const T> values) {
    return BasicMatrix(values.size(), 1, std::vector<T>(values.begin(), values.end()));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::vector<T> col(std::size_t c) const {
    std::vector<T> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
  }

  void set_col(std::size_t c, std::span<const T> values) {
    for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = values[r];
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  BasicMatrix transpose() const {
    BasicMatrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  // Copy of the block starting at (r0, c0) with the given extent.
  BasicMatrix block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const {
    if (r0 + nr > rows_ || c0 + nc > cols_) throw DimensionError("block out of range");
    BasicMatrix b(nr, nc);
    for (std::size_t r = 0; r < nr; ++r)
      std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>((r0 + r) * cols_ + c0), nc,
                  b.data_.begin() + static_cast<std::ptrdiff_t>(r * nc));
    return b;
  }

  void set_block(std::size_t r0, std::size_t c0, const BasicMatrix& src) {
    if (r0 + src.rows_ > rows_ || c0 + src.cols_ > cols_) throw DimensionError("set_block out of range");
    for (std::size_t r = 0; r < src.rows_; ++r)
      std::copy_n(src.data_.begin() + static_cast<std::ptrdiff_t>(r * src.cols_), src.cols_,
                  data_.begin() + static_cast<std::ptrdiff_t>((r0 + r) * cols_ + c0));
  }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  T frobenius_norm() const noexcept {
    T s{0};
    for (T v : data_) s += v * v;
    return std::sqrt(s);
  }

  T max_abs() const noexcept {
    T m{0};
    for (T v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  BasicMatrix& operator+=(const BasicMatrix& o) {
    require_same_shape(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  BasicMatrix& operator-=(const BasicMatrix& o) {
    require_same_shape(o, "-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }

  BasicMatrix& operator*=(T s) noexcept {
    for (T& v : data_) v *= s;
    return *this;
  }

  friend BasicMatrix operator+(BasicMatrix a, const BasicMatrix& b) { return a += b; }
  friend BasicMatrix operator-(BasicMatrix a, const BasicMatrix& b) { return a -= b; }
  friend BasicMatrix operator*(BasicMatrix a, T s) { return a *= s; }
  friend BasicMatrix operator*(T s, BasicMatrix a) { return a *= s; }

  friend BasicMatrix operator*(const BasicMatrix& a, const BasicMatrix& b) {
    if (a.cols_ != b.rows_) {
      throw DimensionError("matmul " + a.shape_string() + " * " + b.shape_string());
    }
    BasicMatrix c(a.rows_, b.cols_);
    for (std::size_t i = 0; i < a.rows_; ++i) {
      T* ci = c.data_.data() + i * c.cols_;
      for (std::size_t k = 0; k < a.cols_; ++k) {
        const T aik = a(i, k);
        if (aik == T{0}) continue;
        const T* bk = b.data_.data() + k * b.cols_;
        for (std::size_t j = 0; j < b.cols_; ++j) ci[j] += aik * bk[j];
      }
    }
    return c;
  }

  // y = A x
  std::vector<T> apply(std::span<const T> x) const {
    if (x.size() != cols_) throw DimensionError("matvec " + shape_string() + " * " + std::to_string(x.size()));
    std::vector<T> y(rows_, T{0});
    for (std::size_t r = 0; r < rows_; ++r) {
      const T* a = data_.data() + r * cols_;
      T s{0};
      for (std::size_t c = 0; c < cols_; ++c) s += a[c] * x[c];
      y[r] = s;
    }
    return y;
  }

  bool operator==(const BasicMatrix& o) const = default;

  std::string shape_string() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

 private:
  void require_same_shape(const BasicMatrix& o, const char* op) const {
    if (rows_ != o.rows_ || cols_ != o.cols_) {
      throw DimensionError(std::string("shape mismatch in ") + op + ": " + shape_string() + " vs " +
                           o.shape_string());
    }
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Matrix = BasicMatrix<double>;
using Vector = std::vector<double>;

// Raw kernels used by the recurrent hot loops. They accumulate into `y` so
// callers can sum several block products without temporaries.

// y += A x, with A given as a row-major rows x cols span.
inline void gemv_acc(const Matrix& a, std::span<const double> x, std::span<double> y) noexcept {
  const std::size_t rows = a.rows();
  const std::size_t cols = a.cols();
  const double* p = a.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    const double* ar = p + r * cols;
    for (std::size_t c = 0; c < cols; ++c) s += ar[c] * x[c];
    y[r] += s;
  }
}

// y += A^T x
inline void gemv_t_acc(const Matrix& a, std::span<const double> x, std::span<double> y) noexcept {
  const std::size_t rows = a.rows();
  const std::size_t cols = a.cols();
  const double* p = a.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    const double* ar = p + r * cols;
    for (std::size_t c = 0; c < cols; ++c) y[c] += ar[c] * xr;
  }
}

// A += u v^T
inline void ger_acc(Matrix& a, std::span<const double> u, std::span<const double> v) noexcept {
  const std::size_t rows = a.rows();
  const std::size_t cols = a.cols();
  double* p = a.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double ur = u[r];
    if (ur == 0.0) continue;
    double* ar = p + r * cols;
    for (std::size_t c = 0; c < cols; ++c) ar[c] += ur * v[c];
  }
}

template <std::floating_point T>
void require_finite(const BasicMatrix<T>& m, const char* what) {
  if (!m.all_finite()) throw NumericInputError(std::string(what) + ": non-finite entry in input");
}

}  // namespace mslmn
