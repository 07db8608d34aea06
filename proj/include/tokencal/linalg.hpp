// Copyright 2026 The tokencal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace tokencal {

/// Dense row-major matrix with owned storage.
template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, T{}) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0; }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<T> flat() noexcept { return data_; }
  std::span<const T> flat() const noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

// Norms below this are treated as zero vectors.
inline constexpr double kZeroNorm = 1e-12;

std::vector<double> to_double(std::span<const float> v);
Matrix<double> to_double(const Matrix<float>& m);

double norm(std::span<const double> v);

/// Unit vector along `v`; throws Error(kZeroVector) naming `what` when ‖v‖ < kZeroNorm.
std::vector<double> normalized(std::span<const double> v, const char* what = "vector");

/// Cosine similarity; throws Error(kZeroVector) if either side is (near) zero.
double cosine(std::span<const double> a, std::span<const double> b);

/// Row vector times matrix: y = x · proj, proj is [x.size() × d_out].
std::vector<double> project(std::span<const double> x, const Matrix<float>& proj);

/// Every row of `rows` projected through `proj`.
Matrix<double> project_rows(const Matrix<float>& rows, const Matrix<float>& proj);

/// Mean computed as x0 + Σ(x − x0)/n: exact for constant input.
double mean(std::span<const double> v);
/// Population standard deviation around mean(v).
double population_std(std::span<const double> v);
/// Median; average of the two middle values for even sizes.
double median(std::span<const double> v);

}  // namespace tokencal
