#pragma once

// Dense row-major matrix and the handful of kernels the rest of the library
// is written against. Samples are rows, features are columns.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "corrfusion/errors.hpp"

namespace corrfusion {

template <typename T>
class BasicMatrix {
 public:
  using value_type = T;

  BasicMatrix() = default;
  BasicMatrix(std::size_t rows, std::size_t cols, T fill = T{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                       " does not match " + shape_string(rows_, cols_));
  }
  // Nested-list literal, one inner list per row.
  BasicMatrix(std::initializer_list<std::initializer_list<T>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw ShapeError("ragged matrix literal");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static BasicMatrix identity(std::size_t n) {
    BasicMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const noexcept {
    return data_[i * cols_ + j];
  }

  std::span<T> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const T> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  std::string shape() const { return shape_string(rows_, cols_); }

  bool operator==(const BasicMatrix&) const = default;

  static std::string shape_string(std::size_t r, std::size_t c) {
    return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Matrix = BasicMatrix<double>;
using Vector = std::vector<double>;

namespace detail {

template <typename T>
void require_same_shape(const BasicMatrix<T>& a, const BasicMatrix<T>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape() + " vs " + b.shape());
}

}  // namespace detail

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: shape mismatch " + a.shape() + " x " + b.shape());
  BasicMatrix<T> out(a.rows(), b.cols());
  const std::size_t n = a.rows(), m = a.cols(), p = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    T* o = &out(i, 0);
    for (std::size_t k = 0; k < m; ++k) {
      const T aik = a(i, k);
      if (aik == T{0}) continue;
      const T* br = &b(k, 0);
      for (std::size_t j = 0; j < p; ++j) o[j] += aik * br[j];
    }
  }
  return out;
}

// aᵀ b without materializing the transpose.
template <typename T>
BasicMatrix<T> matmul_tn(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.rows() != b.rows())
    throw ShapeError("matmul_tn: shape mismatch " + a.shape() + "^T x " + b.shape());
  BasicMatrix<T> out(a.cols(), b.cols());
  for (std::size_t s = 0; s < a.rows(); ++s) {
    const T* ar = &a(s, 0);
    const T* br = &b(s, 0);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const T ai = ar[i];
      if (ai == T{0}) continue;
      T* o = &out(i, 0);
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += ai * br[j];
    }
  }
  return out;
}

// a bᵀ without materializing the transpose.
template <typename T>
BasicMatrix<T> matmul_nt(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.cols())
    throw ShapeError("matmul_nt: shape mismatch " + a.shape() + " x " + b.shape() + "^T");
  BasicMatrix<T> out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const T* ar = &a(i, 0);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const T* br = &b(j, 0);
      T acc{0};
      for (std::size_t k = 0; k < a.cols(); ++k) acc += ar[k] * br[k];
      out(i, j) = acc;
    }
  }
  return out;
}

template <typename T>
BasicMatrix<T> transpose(const BasicMatrix<T>& a) {
  BasicMatrix<T> out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

template <typename T>
std::vector<T> row_l2_norms(const BasicMatrix<T>& a) {
  using std::sqrt;
  std::vector<T> out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    T acc{0};
    for (T v : a.row(i)) acc += v * v;
    out[i] = sqrt(acc);
  }
  return out;
}

template <typename T>
BasicMatrix<T> operator+(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  detail::require_same_shape(a, b, "add");
  BasicMatrix<T> out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return out;
}

template <typename T>
BasicMatrix<T> operator-(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  detail::require_same_shape(a, b, "subtract");
  BasicMatrix<T> out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return out;
}

template <typename T>
BasicMatrix<T> operator*(T s, const BasicMatrix<T>& a) {
  BasicMatrix<T> out = a;
  for (T& v : out.values()) v *= s;
  return out;
}

// a += s * b
template <typename T>
void axpy(T s, const BasicMatrix<T>& b, BasicMatrix<T>& a) {
  detail::require_same_shape(a, b, "axpy");
  auto o = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += s * bv[i];
}

template <typename T>
BasicMatrix<T> hadamard(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  detail::require_same_shape(a, b, "hadamard");
  BasicMatrix<T> out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return out;
}

// Adds `v` to every row (the explicit rank-1 update 1·vᵀ).
template <typename T>
void add_to_rows(BasicMatrix<T>& a, std::span<const T> v) {
  if (v.size() != a.cols())
    throw ShapeError("add_to_rows: vector length " + std::to_string(v.size()) +
                     " vs matrix " + a.shape());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += v[j];
  }
}

// Multiplies row k by s[k].
template <typename T>
BasicMatrix<T> scale_rows(const BasicMatrix<T>& a, std::span<const T> s) {
  if (s.size() != a.rows())
    throw ShapeError("scale_rows: vector length " + std::to_string(s.size()) +
                     " vs matrix " + a.shape());
  BasicMatrix<T> out = a;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (T& v : out.row(i)) v *= s[i];
  return out;
}

template <typename T>
std::vector<T> column_sums(const BasicMatrix<T>& a) {
  std::vector<T> out(a.cols(), T{0});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) out[j] += r[j];
  }
  return out;
}

// Row-wise inner products: out[k] = <a(k,:), b(k,:)>.
template <typename T>
std::vector<T> row_dots(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  detail::require_same_shape(a, b, "row_dots");
  std::vector<T> out(a.rows(), T{0});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ar = a.row(i);
    auto br = b.row(i);
    for (std::size_t j = 0; j < ar.size(); ++j) out[i] += ar[j] * br[j];
  }
  return out;
}

template <typename T>
T frobenius_norm(const BasicMatrix<T>& a) {
  using std::sqrt;
  T acc{0};
  for (T v : a.values()) acc += v * v;
  return sqrt(acc);
}

template <typename T>
bool all_finite(const BasicMatrix<T>& a) {
  using std::isfinite;
  for (T v : a.values())
    if (!isfinite(v)) return false;
  return true;
}

template <typename T>
void require_finite(const BasicMatrix<T>& a, const std::string& what) {
  if (!all_finite(a)) throw NumericError(what + ": non-finite entry");
}

template <typename T>
T max_abs_diff(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  using std::abs;
  detail::require_same_shape(a, b, "max_abs_diff");
  T m{0};
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) m = std::max(m, abs(av[i] - bv[i]));
  return m;
}

// Rows of `a` picked by index, in the given order.
template <typename T, typename Index>
BasicMatrix<T> gather_rows(const BasicMatrix<T>& a, std::span<const Index> idx) {
  BasicMatrix<T> out(idx.size(), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto src = a.row(static_cast<std::size_t>(idx[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

template <typename U, typename T>
BasicMatrix<U> cast_matrix(const BasicMatrix<T>& a) {
  BasicMatrix<U> out(a.rows(), a.cols());
  auto src = a.values();
  std::transform(src.begin(), src.end(), out.values().begin(),
                 [](T v) { return static_cast<U>(v); });
  return out;
}

}  // namespace corrfusion
