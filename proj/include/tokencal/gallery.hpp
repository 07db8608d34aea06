// Copyright 2026 The tokencal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace tokencal {

struct GalleryEntry {
  std::string image_id;
  std::vector<double> calibrated;       // as computed (already unit-norm after CVE)
  std::vector<double> raw;              // exported cls_joint
  std::vector<double> calibrated_unit;  // derived
  std::vector<double> raw_unit;         // derived
  std::size_t dominant_count = 0;
};

/// Which stored vector a similarity is computed against.
enum class GalleryView { kCalibrated, kRaw };

/// Read-only after build; entries keep insertion order.
class GalleryIndex {
 public:
  GalleryIndex() = default;
  explicit GalleryIndex(std::size_t joint_dim) : joint_dim_(joint_dim) {}

  /// Derives the unit vectors. Throws DuplicateId, DimensionMismatch, ZeroVector.
  void add(std::string image_id, std::vector<double> calibrated, std::vector<double> raw,
           std::size_t dominant_count = 0);

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t joint_dim() const noexcept { return joint_dim_; }
  const std::vector<GalleryEntry>& entries() const noexcept { return entries_; }
  const GalleryEntry& operator[](std::size_t i) const { return entries_[i]; }

  std::span<const double> unit(std::size_t i, GalleryView view) const {
    return view == GalleryView::kCalibrated ? entries_[i].calibrated_unit : entries_[i].raw_unit;
  }

  std::vector<std::string> ids() const;

 private:
  std::size_t joint_dim_ = 0;
  std::vector<GalleryEntry> entries_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

/// Index file: JSON with {"version":1, "joint_dim", "config", "summary",
/// "entries":[{"image_id","calibrated":[...],"raw":[...],"dominant_count"}]}.
/// Doubles are written in shortest round-trip form, so save/load is exact.
void save_index(const GalleryIndex& index, const std::filesystem::path& file, const nlohmann::json& config,
                const nlohmann::json& summary);
GalleryIndex load_index(const std::filesystem::path& file);

}  // namespace tokencal
