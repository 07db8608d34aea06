// Copyright 2026 The tokencal Authors
// SPDX-License-Identifier: Apache-2.0

// Built with -mavx2 -mfma. Only reached after a cpuid check.

#include <immintrin.h>

#include "kernels/kernel_impl.hpp"

namespace tokencal::kernels::detail {

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

}  // namespace

double dot_f64_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double sum = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    sum += a[i] * b[i];
  }
  return sum;
}

double dot_f32_avx2(const float* a, const float* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 va = _mm256_loadu_ps(a + i);
    __m256 vb = _mm256_loadu_ps(b + i);
    __m256d a_lo = _mm256_cvtps_pd(_mm256_castps256_ps128(va));
    __m256d b_lo = _mm256_cvtps_pd(_mm256_castps256_ps128(vb));
    __m256d a_hi = _mm256_cvtps_pd(_mm256_extractf128_ps(va, 1));
    __m256d b_hi = _mm256_cvtps_pd(_mm256_extractf128_ps(vb, 1));
    acc0 = _mm256_fmadd_pd(a_lo, b_lo, acc0);
    acc1 = _mm256_fmadd_pd(a_hi, b_hi, acc1);
  }
  double sum = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return sum;
}

void axpy_f64_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  if (i < n) {
    // fma-exact tail through a partial vector so rounding matches the body.
    alignas(32) double xs[4] = {0.0, 0.0, 0.0, 0.0};
    alignas(32) double ys[4] = {0.0, 0.0, 0.0, 0.0};
    const std::size_t rem = n - i;
    for (std::size_t k = 0; k < rem; ++k) {
      xs[k] = x[i + k];
      ys[k] = y[i + k];
    }
    _mm256_store_pd(ys, _mm256_fmadd_pd(va, _mm256_load_pd(xs), _mm256_load_pd(ys)));
    for (std::size_t k = 0; k < rem; ++k) {
      y[i + k] = ys[k];
    }
  }
}

void axpy_f32_avx2(double alpha, const float* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vx = _mm256_cvtps_pd(_mm_loadu_ps(x + i));
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, vx, _mm256_loadu_pd(y + i)));
  }
  if (i < n) {
    alignas(32) double xs[4] = {0.0, 0.0, 0.0, 0.0};
    alignas(32) double ys[4] = {0.0, 0.0, 0.0, 0.0};
    const std::size_t rem = n - i;
    for (std::size_t k = 0; k < rem; ++k) {
      xs[k] = static_cast<double>(x[i + k]);
      ys[k] = y[i + k];
    }
    _mm256_store_pd(ys, _mm256_fmadd_pd(va, _mm256_load_pd(xs), _mm256_load_pd(ys)));
    for (std::size_t k = 0; k < rem; ++k) {
      y[i + k] = ys[k];
    }
  }
}

}  // namespace tokencal::kernels::detail
