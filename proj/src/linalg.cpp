// Copyright 2026 The tokencal Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokencal/linalg.hpp"

#include <algorithm>
#include <cmath>

#include "tokencal/error.hpp"
#include "tokencal/kernels.hpp"

namespace tokencal {

std::vector<double> to_double(std::span<const float> v) { return {v.begin(), v.end()}; }

Matrix<double> to_double(const Matrix<float>& m) {
  return Matrix<double>(m.rows(), m.cols(), std::vector<double>(m.flat().begin(), m.flat().end()));
}

double norm(std::span<const double> v) { return std::sqrt(kernels::dot(v, v)); }

std::vector<double> normalized(std::span<const double> v, const char* what) {
  const double n = norm(v);
  if (!(n >= kZeroNorm)) {
    throw Error(ErrorCode::kZeroVector, what, "norm below 1e-12");
  }
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) {
    x /= n;
  }
  return out;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "cosine", "operand sizes differ");
  }
  const double na = norm(a);
  const double nb = norm(b);
  if (!(na >= kZeroNorm) || !(nb >= kZeroNorm)) {
    throw Error(ErrorCode::kZeroVector, "cosine", "norm below 1e-12");
  }
  return kernels::dot(a, b) / (na * nb);
}

std::vector<double> project(std::span<const double> x, const Matrix<float>& proj) {
  if (x.size() != proj.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "projection", "input width does not match projection rows");
  }
  std::vector<double> y(proj.cols(), 0.0);
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (x[k] != 0.0) {
      kernels::axpy(x[k], proj.row(k), y);
    }
  }
  return y;
}

Matrix<double> project_rows(const Matrix<float>& rows, const Matrix<float>& proj) {
  if (rows.cols() != proj.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "projection", "token width does not match projection rows");
  }
  Matrix<double> out(rows.rows(), proj.cols());
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    auto src = rows.row(r);
    auto dst = out.row(r);
    for (std::size_t k = 0; k < src.size(); ++k) {
      if (src[k] != 0.0F) {
        kernels::axpy(static_cast<double>(src[k]), proj.row(k), dst);
      }
    }
  }
  return out;
}

double mean(std::span<const double> v) {
  if (v.empty()) {
    return 0.0;
  }
  const double x0 = v.front();
  double acc = 0.0;
  for (double x : v) {
    acc += x - x0;
  }
  return x0 + acc / static_cast<double>(v.size());
}

double population_std(std::span<const double> v) {
  if (v.empty()) {
    return 0.0;
  }
  const double mu = mean(v);
  double acc = 0.0;
  for (double x : v) {
    acc += (x - mu) * (x - mu);
  }
  return std::sqrt(acc / static_cast<double>(v.size()));
}

double median(std::span<const double> v) {
  if (v.empty()) {
    return 0.0;
  }
  std::vector<double> tmp(v.begin(), v.end());
  const std::size_t mid = tmp.size() / 2;
  std::nth_element(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(mid), tmp.end());
  const double upper = tmp[mid];
  if (tmp.size() % 2 == 1) {
    return upper;
  }
  const double lower = *std::max_element(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(mid));
  return lower + (upper - lower) / 2.0;
}

}  // namespace tokencal
