// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctmmcp/core/error.hpp"
#include "ctmmcp/core/rng.hpp"

namespace ctmmcp {

using Vector = std::vector<float>;

/// Row-major dense matrix with 32-bit storage.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    require_dim(data_.size(), rows * cols, "matrix storage");
  }

  /// uniform(-1/sqrt(cols), +1/sqrt(cols)), row-major draw order.
  static Matrix uniform(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Matrix m(rows, cols);
    SplitMix64 rng(seed);
    const double bound = cols == 0 ? 0.0 : 1.0 / std::sqrt(static_cast<double>(cols));
    for (auto& v : m.data_) v = static_cast<float>(rng.uniform(-bound, bound));
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<float> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const float> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  bool all_finite() const noexcept {
    for (float v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

/// Largest binary32 value below one.
inline constexpr float kBelowOne = 0x1.fffffep-1f;

/// tanh rounded to binary32 and kept strictly inside (-1, 1).
inline float bounded_tanh(double x) noexcept {
  return std::clamp(static_cast<float>(std::tanh(x)), -kBelowOne, kBelowOne);
}

/// Dot product with 64-bit accumulation.
inline double dot(std::span<const float> a, std::span<const float> b) noexcept {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

/// y = W x, accumulated in double.
inline std::vector<double> matvec(const Matrix& w, std::span<const float> x, std::string_view what) {
  require_dim(x.size(), w.cols(), what);
  std::vector<double> y(w.rows());
  for (std::size_t r = 0; r < w.rows(); ++r) y[r] = dot(w.row(r), x);
  return y;
}

/// y = tanh(W x), stored as float.
inline Vector tanh_layer(const Matrix& w, std::span<const float> x, std::string_view what) {
  const auto pre = matvec(w, x, what);
  Vector y(pre.size());
  for (std::size_t i = 0; i < pre.size(); ++i) y[i] = bounded_tanh(pre[i]);
  return y;
}

inline bool all_finite(std::span<const float> v) noexcept {
  for (float x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline double max_abs(std::span<const float> v) noexcept {
  double m = 0.0;
  for (float x : v) m = std::max(m, std::abs(static_cast<double>(x)));
  return m;
}

}  // namespace ctmmcp
