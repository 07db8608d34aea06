// Copyright 2026 The tokencal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Vector kernels behind every inner loop of the engine.
//
// Each kernel has a portable scalar reference and, where the target allows,
// an AVX2+FMA (x86-64) or NEON (aarch64) variant. The variant is chosen once
// at startup from the CPU's capabilities and can be forced with the
// TOKENCAL_ISA environment variable (scalar | avx2 | neon) or set_active_isa().
//
// All accumulation is done in double precision. axpy variants round exactly
// like std::fma, so they are bit-identical across ISAs; dot products differ
// only by summation order.

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace tokencal::kernels {

enum class Isa { kScalar, kAvx2, kNeon };

struct KernelTable {
  Isa isa;
  double (*dot_f64)(const double* a, const double* b, std::size_t n);
  double (*dot_f32)(const float* a, const float* b, std::size_t n);
  // y[i] = fma(alpha, x[i], y[i])
  void (*axpy_f64)(double alpha, const double* x, double* y, std::size_t n);
  void (*axpy_f32)(double alpha, const float* x, double* y, std::size_t n);
};

std::string_view isa_name(Isa isa);
std::optional<Isa> parse_isa(std::string_view name);

bool isa_available(Isa isa);
std::vector<Isa> available_isas();

/// Kernel table for a specific ISA. Throws Error(kInvalidConfig) if the ISA is
/// not compiled in or not supported by this CPU.
const KernelTable& table_for(Isa isa);

const KernelTable& active();
Isa active_isa();
void set_active_isa(Isa isa);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot_f64(a.data(), b.data(), a.size());
}

inline double dot(std::span<const float> a, std::span<const float> b) {
  return active().dot_f32(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy_f64(alpha, x.data(), y.data(), x.size());
}

inline void axpy(double alpha, std::span<const float> x, std::span<double> y) {
  active().axpy_f32(alpha, x.data(), y.data(), x.size());
}

}  // namespace tokencal::kernels
