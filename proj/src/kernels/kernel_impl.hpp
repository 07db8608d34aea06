// Copyright 2026 The tokencal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Per-ISA entry points. Kept free of templates and standard headers beyond
// <cstddef> so that ISA-specific translation units never emit inline code
// that the linker could fold into generic callers.

#include <cstddef>

namespace tokencal::kernels::detail {

double dot_f64_scalar(const double* a, const double* b, std::size_t n);
double dot_f32_scalar(const float* a, const float* b, std::size_t n);
void axpy_f64_scalar(double alpha, const double* x, double* y, std::size_t n);
void axpy_f32_scalar(double alpha, const float* x, double* y, std::size_t n);

#if defined(TOKENCAL_HAVE_AVX2)
double dot_f64_avx2(const double* a, const double* b, std::size_t n);
double dot_f32_avx2(const float* a, const float* b, std::size_t n);
void axpy_f64_avx2(double alpha, const double* x, double* y, std::size_t n);
void axpy_f32_avx2(double alpha, const float* x, double* y, std::size_t n);
#endif

#if defined(TOKENCAL_HAVE_NEON)
double dot_f64_neon(const double* a, const double* b, std::size_t n);
double dot_f32_neon(const float* a, const float* b, std::size_t n);
void axpy_f64_neon(double alpha, const double* x, double* y, std::size_t n);
void axpy_f32_neon(double alpha, const float* x, double* y, std::size_t n);
#endif

}  // namespace tokencal::kernels::detail
