// Copyright 2026 The tokencal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Visual-side calibration: find patch tokens that soak up [CLS] attention in
// low-information regions and damp them before the global embedding is
// re-aggregated.
//
//   1. decouple_regions  – split patches into target / background by cosine
//                          similarity to a reference vector in joint space,
//                          against an adaptive threshold (mean by default).
//   2. local_contrast    – z-score of each patch's attention against its
//                          8-connected grid neighbourhood.
//      detect_dominant   – background patches whose contrast is strictly
//                          greater than every neighbour's.
//   3. rectify           – gate dominant tokens to a residual level eta,
//                          reweight the [CLS] attention with the gate,
//                          renormalize and re-pool the global embedding.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "tokencal/feature_model.hpp"
#include "tokencal/linalg.hpp"

namespace tokencal {

enum class VisualThreshold { kMean, kMeanPlusStd, kMedian };

std::string_view to_string(VisualThreshold t);
VisualThreshold parse_visual_threshold(std::string_view name);

struct RectifierConfig {
  double eta = 0.1;
  VisualThreshold threshold = VisualThreshold::kMean;
  double epsilon = 1e-6;

  /// Throws Error(kInvalidConfig) unless 0 <= eta <= 1 and epsilon > 0.
  void validate() const;
};

struct RegionMask {
  std::vector<std::uint8_t> target;  // 1 = target region, 0 = background
  std::vector<double> similarity;    // per-patch cosine to the reference
  double tau_sim = 0.0;

  std::size_t size() const noexcept { return target.size(); }
  bool is_target(std::size_t i) const { return target[i] != 0; }
  std::vector<std::size_t> target_indices() const;
  std::vector<std::size_t> background_indices() const;
};

struct DominantReport {
  std::vector<double> lc;        // local attention deviation per patch
  std::vector<double> combined;  // lc * attention
  std::vector<std::size_t> dominant;  // ascending patch indices
  std::vector<std::uint8_t> neighbor_degree;

  bool is_dominant(std::size_t i) const;
};

struct RectifiedFeatures {
  Matrix<double> patch_tokens;    // [N x d], g_i * v_i
  std::vector<double> gate;       // g_i in {eta, 1}
  std::vector<double> attention;  // reweighted, sums to 1
  std::vector<double> cls_joint;  // unit-norm
};

/// Threshold statistic of a similarity vector.
double similarity_threshold(std::span<const double> similarity, VisualThreshold strategy);

/// Mask from precomputed similarities; ties (s == tau) go to the target.
RegionMask threshold_regions(std::vector<double> similarity, VisualThreshold strategy);

/// Cosine of each projected patch with `reference`. Throws ZeroVector for a
/// (near) zero reference or projected patch.
RegionMask decouple_regions(const Matrix<double>& projected_patches, std::span<const double> reference,
                            const RectifierConfig& cfg);
RegionMask decouple_regions(const VisualBundle& visual, std::span<const double> text_global,
                            const RectifierConfig& cfg);

/// In-bounds 8-connected neighbours of cell `index`, ascending.
std::vector<std::size_t> grid_neighbors(std::size_t index, Grid grid);

/// (A_i - mean(A_N)) / (popstd(A_N) + epsilon) over the 8-neighbourhood.
/// Cells without neighbours get 0. Throws GridMismatch if size != h*w.
std::vector<double> local_contrast(std::span<const double> attention, Grid grid, double epsilon);

/// Dominant tokens: background cells whose contrast is strictly greater than
/// that of every neighbour.
DominantReport detect_dominant(std::span<const double> attention, Grid grid, const RegionMask& mask,
                               const RectifierConfig& cfg);
DominantReport detect_dominant(const VisualBundle& visual, const RegionMask& mask, const RectifierConfig& cfg);

/// Throws DegenerateAttention if the gated attention mass falls below 1e-12.
RectifiedFeatures rectify(const VisualBundle& visual, const DominantReport& report, const RectifierConfig& cfg);

/// Gated attention a'_i = g_i a_i / sum_j g_j a_j.
std::vector<double> reweight_attention(std::span<const double> attention, std::span<const double> gate);

/// Query-agnostic stand-in for the text query when calibrating at index time:
/// unit mean of the unit-normalized projected patches.
std::vector<double> patch_consensus(const Matrix<double>& projected_patches);

struct ImageCalibration {
  RegionMask mask;
  DominantReport report;
  RectifiedFeatures features;
};

/// Full visual calibration of one image against `reference` (a text global
/// embedding, or patch_consensus when none is available). With `enabled`
/// false the dominant set is emptied, so the result is the un-gated re-pool.
ImageCalibration calibrate_image(const VisualBundle& visual, std::span<const double> reference,
                                 const RectifierConfig& cfg, bool enabled = true);
ImageCalibration calibrate_image(const VisualBundle& visual, const RectifierConfig& cfg, bool enabled = true);

}  // namespace tokencal
