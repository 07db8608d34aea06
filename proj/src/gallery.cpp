// Copyright 2026 The tokencal Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokencal/gallery.hpp"

#include <fstream>

#include "tokencal/error.hpp"
#include "tokencal/linalg.hpp"

namespace tokencal {

using nlohmann::json;

void GalleryIndex::add(std::string image_id, std::vector<double> calibrated, std::vector<double> raw,
                       std::size_t dominant_count) {
  if (joint_dim_ == 0) {
    joint_dim_ = calibrated.size();
  }
  if (calibrated.size() != joint_dim_ || raw.size() != joint_dim_) {
    throw Error(ErrorCode::kDimensionMismatch, image_id,
                "joint dimension differs from index (" + std::to_string(joint_dim_) + ")");
  }
  if (by_id_.contains(image_id)) {
    throw Error(ErrorCode::kDuplicateId, image_id, "image id already indexed");
  }
  GalleryEntry e;
  e.calibrated_unit = normalized(calibrated, "calibrated");
  e.raw_unit = normalized(raw, "raw");
  e.image_id = image_id;
  e.calibrated = std::move(calibrated);
  e.raw = std::move(raw);
  e.dominant_count = dominant_count;
  by_id_.emplace(std::move(image_id), entries_.size());
  entries_.push_back(std::move(e));
}

std::vector<std::string> GalleryIndex::ids() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) {
    out.push_back(e.image_id);
  }
  return out;
}

void save_index(const GalleryIndex& index, const std::filesystem::path& file, const json& config,
                const json& summary) {
  json entries = json::array();
  for (const auto& e : index.entries()) {
    entries.push_back(json{{"image_id", e.image_id},
                           {"calibrated", e.calibrated},
                           {"raw", e.raw},
                           {"dominant_count", e.dominant_count}});
  }
  const json doc{{"version", 1},
                 {"joint_dim", index.joint_dim()},
                 {"config", config},
                 {"summary", summary},
                 {"entries", std::move(entries)}};
  std::ofstream out(file, std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::kIo, file.string(), "cannot write index");
  }
  out << doc.dump() << '\n';
  if (!out) {
    throw Error(ErrorCode::kIo, file.string(), "write failed");
  }
}

GalleryIndex load_index(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) {
    throw Error(ErrorCode::kIo, file.string(), "cannot open index");
  }
  json doc;
  try {
    in >> doc;
    if (doc.at("version").get<int>() != 1) {
      throw Error(ErrorCode::kManifestVersionUnsupported, file.string(), "index version");
    }
    GalleryIndex index(doc.at("joint_dim").get<std::size_t>());
    for (const auto& e : doc.at("entries")) {
      index.add(e.at("image_id").get<std::string>(), e.at("calibrated").get<std::vector<double>>(),
                e.at("raw").get<std::vector<double>>(), e.value("dominant_count", std::size_t{0}));
    }
    return index;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kManifestInvalid, file.string(), e.what());
  }
}

}  // namespace tokencal
