// Copyright 2026 The tokencal Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokencal/cve.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tokencal/error.hpp"
#include "tokencal/kernels.hpp"

namespace tokencal {

std::string_view to_string(VisualThreshold t) {
  switch (t) {
    case VisualThreshold::kMean: return "mean";
    case VisualThreshold::kMeanPlusStd: return "mean_plus_std";
    case VisualThreshold::kMedian: return "median";
  }
  return "mean";
}

VisualThreshold parse_visual_threshold(std::string_view name) {
  if (name == "mean") return VisualThreshold::kMean;
  if (name == "mean_plus_std") return VisualThreshold::kMeanPlusStd;
  if (name == "median") return VisualThreshold::kMedian;
  throw Error(ErrorCode::kInvalidConfig, "vis-threshold", "unknown strategy '" + std::string(name) + "'");
}

void RectifierConfig::validate() const {
  if (!(eta >= 0.0 && eta <= 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "eta", "must lie in [0, 1]");
  }
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw Error(ErrorCode::kInvalidConfig, "epsilon", "must be a positive finite number");
  }
}

std::vector<std::size_t> RegionMask::target_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i]) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> RegionMask::background_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (!target[i]) out.push_back(i);
  }
  return out;
}

bool DominantReport::is_dominant(std::size_t i) const {
  return std::binary_search(dominant.begin(), dominant.end(), i);
}

// --- Step 1: target / background decoupling -----------------------------------------

double similarity_threshold(std::span<const double> similarity, VisualThreshold strategy) {
  switch (strategy) {
    case VisualThreshold::kMean:
      return mean(similarity);
    case VisualThreshold::kMeanPlusStd:
      return mean(similarity) + population_std(similarity);
    case VisualThreshold::kMedian:
      return median(similarity);
  }
  return mean(similarity);
}

RegionMask threshold_regions(std::vector<double> similarity, VisualThreshold strategy) {
  RegionMask mask;
  mask.tau_sim = similarity_threshold(similarity, strategy);
  mask.target.resize(similarity.size());
  for (std::size_t i = 0; i < similarity.size(); ++i) {
    mask.target[i] = similarity[i] >= mask.tau_sim ? 1 : 0;
  }
  mask.similarity = std::move(similarity);
  return mask;
}

RegionMask decouple_regions(const Matrix<double>& projected_patches, std::span<const double> reference,
                            const RectifierConfig& cfg) {
  if (reference.size() != projected_patches.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "text_global",
                "reference has " + std::to_string(reference.size()) + " dims, patches project to " +
                    std::to_string(projected_patches.cols()));
  }
  const double ref_norm = norm(reference);
  if (!(ref_norm >= kZeroNorm)) {
    throw Error(ErrorCode::kZeroVector, "text_global", "reference vector norm below 1e-12");
  }
  std::vector<double> sims(projected_patches.rows());
  for (std::size_t i = 0; i < sims.size(); ++i) {
    auto p = projected_patches.row(i);
    const double pn = norm(p);
    if (!(pn >= kZeroNorm)) {
      throw Error(ErrorCode::kZeroVector, "patch " + std::to_string(i), "projected patch norm below 1e-12");
    }
    sims[i] = kernels::dot(p, reference) / (pn * ref_norm);
  }
  return threshold_regions(std::move(sims), cfg.threshold);
}

RegionMask decouple_regions(const VisualBundle& visual, std::span<const double> text_global,
                            const RectifierConfig& cfg) {
  return decouple_regions(project_rows(visual.patch_tokens, visual.visual_projection), text_global, cfg);
}

// --- Step 2: dominant token localization ----------------------------------------------

std::vector<std::size_t> grid_neighbors(std::size_t index, Grid grid) {
  std::vector<std::size_t> out;
  out.reserve(8);
  const auto r = static_cast<std::ptrdiff_t>(index / grid.cols);
  const auto c = static_cast<std::ptrdiff_t>(index % grid.cols);
  const auto rows = static_cast<std::ptrdiff_t>(grid.rows);
  const auto cols = static_cast<std::ptrdiff_t>(grid.cols);
  for (std::ptrdiff_t dr = -1; dr <= 1; ++dr) {
    for (std::ptrdiff_t dc = -1; dc <= 1; ++dc) {
      if (dr == 0 && dc == 0) continue;
      const std::ptrdiff_t rr = r + dr;
      const std::ptrdiff_t cc = c + dc;
      if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) continue;
      out.push_back(static_cast<std::size_t>(rr * cols + cc));
    }
  }
  return out;
}

std::vector<double> local_contrast(std::span<const double> attention, Grid grid, double epsilon) {
  if (attention.size() != grid.size()) {
    throw Error(ErrorCode::kGridMismatch, "attention",
                std::to_string(attention.size()) + " values for a " + std::to_string(grid.rows) + "x" +
                    std::to_string(grid.cols) + " grid");
  }
  std::vector<double> lc(attention.size(), 0.0);
  std::vector<double> neigh;
  neigh.reserve(8);
  for (std::size_t i = 0; i < attention.size(); ++i) {
    neigh.clear();
    for (std::size_t j : grid_neighbors(i, grid)) {
      neigh.push_back(attention[j]);
    }
    if (neigh.empty()) continue;
    const double mu = mean(neigh);
    double var = 0.0;
    for (double a : neigh) {
      var += (a - mu) * (a - mu);
    }
    const double sd = std::sqrt(var / static_cast<double>(neigh.size()));
    lc[i] = (attention[i] - mu) / (sd + epsilon);
  }
  return lc;
}

DominantReport detect_dominant(std::span<const double> attention, Grid grid, const RegionMask& mask,
                               const RectifierConfig& cfg) {
  cfg.validate();
  if (mask.size() != attention.size()) {
    throw Error(ErrorCode::kGridMismatch, "region_mask", "mask size differs from attention size");
  }
  DominantReport report;
  report.lc = local_contrast(attention, grid, cfg.epsilon);
  report.combined.resize(attention.size());
  report.neighbor_degree.resize(attention.size());
  for (std::size_t i = 0; i < attention.size(); ++i) {
    report.combined[i] = report.lc[i] * attention[i];
    const auto neighbors = grid_neighbors(i, grid);
    report.neighbor_degree[i] = static_cast<std::uint8_t>(neighbors.size());
    if (mask.is_target(i) || neighbors.empty()) continue;
    const bool peak = std::all_of(neighbors.begin(), neighbors.end(),
                                  [&](std::size_t j) { return report.lc[i] > report.lc[j]; });
    if (peak) {
      report.dominant.push_back(i);
    }
  }
  return report;
}

DominantReport detect_dominant(const VisualBundle& visual, const RegionMask& mask, const RectifierConfig& cfg) {
  const auto attention = to_double(visual.cls_attention);
  return detect_dominant(attention, visual.grid, mask, cfg);
}

// --- Step 3: rectification ------------------------------------------------------------

std::vector<double> reweight_attention(std::span<const double> attention, std::span<const double> gate) {
  std::vector<double> out(attention.size());
  double total = 0.0;
  for (std::size_t i = 0; i < attention.size(); ++i) {
    out[i] = gate[i] * attention[i];
    total += out[i];
  }
  if (!(total >= kZeroNorm)) {
    throw Error(ErrorCode::kDegenerateAttention, "cls_attention", "gated attention mass below 1e-12");
  }
  for (double& a : out) {
    a /= total;
  }
  return out;
}

RectifiedFeatures rectify(const VisualBundle& visual, const DominantReport& report, const RectifierConfig& cfg) {
  cfg.validate();
  const std::size_t n = visual.num_patches();
  const std::size_t d = visual.token_dim();
  RectifiedFeatures out;
  out.gate.assign(n, 1.0);
  for (std::size_t i : report.dominant) {
    if (i >= n) {
      throw Error(ErrorCode::kGridMismatch, "dominant", "token index out of range");
    }
    out.gate[i] = cfg.eta;
  }

  out.patch_tokens = Matrix<double>(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    auto src = visual.patch_tokens.row(i);
    auto dst = out.patch_tokens.row(i);
    for (std::size_t k = 0; k < d; ++k) {
      dst[k] = out.gate[i] * static_cast<double>(src[k]);
    }
  }

  out.attention = reweight_attention(to_double(visual.cls_attention), out.gate);

  std::vector<double> pooled(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    kernels::axpy(out.attention[i], std::span<const double>(out.patch_tokens.row(i)), pooled);
  }
  out.cls_joint = normalized(project(pooled, visual.visual_projection), "cls_joint_rect");
  return out;
}

std::vector<double> patch_consensus(const Matrix<double>& projected_patches) {
  std::vector<double> acc(projected_patches.cols(), 0.0);
  for (std::size_t i = 0; i < projected_patches.rows(); ++i) {
    auto unit = normalized(projected_patches.row(i), "projected patch");
    kernels::axpy(1.0, std::span<const double>(unit), acc);
  }
  return normalized(acc, "patch_consensus");
}

ImageCalibration calibrate_image(const VisualBundle& visual, std::span<const double> reference,
                                 const RectifierConfig& cfg, bool enabled) {
  cfg.validate();
  const Matrix<double> projected = project_rows(visual.patch_tokens, visual.visual_projection);
  ImageCalibration out;
  out.mask = decouple_regions(projected, reference, cfg);
  out.report = detect_dominant(visual, out.mask, cfg);
  if (!enabled) {
    out.report.dominant.clear();
  }
  out.features = rectify(visual, out.report, cfg);
  return out;
}

ImageCalibration calibrate_image(const VisualBundle& visual, const RectifierConfig& cfg, bool enabled) {
  const Matrix<double> projected = project_rows(visual.patch_tokens, visual.visual_projection);
  const auto reference = patch_consensus(projected);
  return calibrate_image(visual, reference, cfg, enabled);
}

}  // namespace tokencal
