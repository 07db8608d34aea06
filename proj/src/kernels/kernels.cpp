// Copyright 2026 The tokencal Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokencal/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <string>

#include "kernels/kernel_impl.hpp"
#include "tokencal/error.hpp"

namespace tokencal::kernels {

namespace detail {

double dot_f64_scalar(const double* a, const double* b, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += a[i] * b[i];
  }
  return sum;
}

double dot_f32_scalar(const float* a, const float* b, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return sum;
}

void axpy_f64_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = std::fma(alpha, x[i], y[i]);
  }
}

void axpy_f32_scalar(double alpha, const float* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = std::fma(alpha, static_cast<double>(x[i]), y[i]);
  }
}

}  // namespace detail

namespace {

constexpr KernelTable kScalarTable{Isa::kScalar, detail::dot_f64_scalar, detail::dot_f32_scalar,
                                   detail::axpy_f64_scalar, detail::axpy_f32_scalar};

#if defined(TOKENCAL_HAVE_AVX2)
constexpr KernelTable kAvx2Table{Isa::kAvx2, detail::dot_f64_avx2, detail::dot_f32_avx2,
                                 detail::axpy_f64_avx2, detail::axpy_f32_avx2};
#endif

#if defined(TOKENCAL_HAVE_NEON)
constexpr KernelTable kNeonTable{Isa::kNeon, detail::dot_f64_neon, detail::dot_f32_neon,
                                 detail::axpy_f64_neon, detail::axpy_f32_neon};
#endif

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(TOKENCAL_HAVE_AVX2)
      __builtin_cpu_init();
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::kNeon:
#if defined(TOKENCAL_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable* pick_default() {
  if (const char* env = std::getenv("TOKENCAL_ISA")) {
    auto requested = parse_isa(env);
    if (requested && isa_available(*requested)) {
      return &table_for(*requested);
    }
  }
  if (isa_available(Isa::kAvx2)) {
    return &table_for(Isa::kAvx2);
  }
  if (isa_available(Isa::kNeon)) {
    return &table_for(Isa::kNeon);
  }
  return &kScalarTable;
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{pick_default()};
  return slot;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
    case Isa::kNeon: return "neon";
  }
  return "unknown";
}

std::optional<Isa> parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::kScalar;
  if (name == "avx2") return Isa::kAvx2;
  if (name == "neon") return Isa::kNeon;
  return std::nullopt;
}

bool isa_available(Isa isa) { return cpu_supports(isa); }

std::vector<Isa> available_isas() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::kScalar, Isa::kAvx2, Isa::kNeon}) {
    if (isa_available(isa)) {
      out.push_back(isa);
    }
  }
  return out;
}

const KernelTable& table_for(Isa isa) {
  if (!isa_available(isa)) {
    throw Error(ErrorCode::kInvalidConfig, std::string(isa_name(isa)), "kernel ISA not available on this build/CPU");
  }
  switch (isa) {
#if defined(TOKENCAL_HAVE_AVX2)
    case Isa::kAvx2:
      return kAvx2Table;
#endif
#if defined(TOKENCAL_HAVE_NEON)
    case Isa::kNeon:
      return kNeonTable;
#endif
    default:
      return kScalarTable;
  }
}

const KernelTable& active() { return *active_slot().load(std::memory_order_relaxed); }

Isa active_isa() { return active().isa; }

void set_active_isa(Isa isa) { active_slot().store(&table_for(isa), std::memory_order_relaxed); }

}  // namespace tokencal::kernels
