// Copyright 2026 The tokencal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Batch runs behind the command-line tool: index a gallery of visual
// bundles, retrieve for a directory of text bundles, evaluate, inspect.
// Every run is deterministic for a given RunConfig; thread count only changes
// scheduling, never output.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tokencal/cve.hpp"
#include "tokencal/dcc.hpp"
#include "tokencal/gallery.hpp"
#include "tokencal/rerank.hpp"

namespace tokencal {

struct RunConfig {
  std::filesystem::path gallery_dir;
  std::filesystem::path query_dir;
  std::filesystem::path index_file;
  std::filesystem::path relevance_file;
  std::filesystem::path output_dir;

  RectifierConfig rectifier;
  FusionConfig fusion;
  TextThreshold text_threshold = TextThreshold::kMean;

  bool disable_cve = false;
  bool disable_dcc = false;
  bool skip_bad = false;
  bool raw_gallery = false;

  std::size_t threads = 1;
  std::uint64_t seed = 7;

  void validate() const;
  nlohmann::json to_json() const;
};

struct SkippedBundle {
  std::string path;
  std::string error;
};

struct IndexSummary {
  std::size_t images = 0;
  std::size_t images_with_dominant = 0;
  std::size_t dominant_tokens = 0;
  std::size_t patches = 0;
  std::vector<SkippedBundle> skipped;

  double dominant_token_rate() const {
    return patches == 0 ? 0.0 : static_cast<double>(dominant_tokens) / static_cast<double>(patches);
  }
  nlohmann::json to_json() const;
};

struct IndexBuild {
  GalleryIndex index;
  IndexSummary summary;
};

/// Bundle directories (those holding a manifest.json) under `root`, sorted.
std::vector<std::filesystem::path> list_bundles(const std::filesystem::path& root);

/// Loads and calibrates every visual bundle under cfg.gallery_dir. Aborts on
/// the first bad bundle unless cfg.skip_bad.
IndexBuild build_index(const RunConfig& cfg);

/// Ranks every text bundle under cfg.query_dir; results ordered by query id.
std::vector<RankingResult> retrieve(const GalleryIndex& index, const RunConfig& cfg);

/// build_index + write output_dir/index.json and output_dir/run_config.json.
IndexSummary run_index(const RunConfig& cfg);

/// retrieve against cfg.index_file + write output_dir/results.jsonl and
/// output_dir/run_config.json. Returns the results path.
std::filesystem::path run_retrieve(const RunConfig& cfg);

Metrics run_eval(const std::filesystem::path& results_file, const std::filesystem::path& relevance_file);

struct InspectReport {
  std::string kind;  // "visual" | "text"
  std::vector<std::filesystem::path> files;
  nlohmann::json details;
};

/// Visual bundle: attention / lc / gate as CSV + PGM grids and a JSON report.
/// Text bundle: text_subspace.json. With `query_bundle`, a visual bundle is
/// decoupled against that query's global embedding instead of the patch
/// consensus.
InspectReport run_inspect(const std::filesystem::path& bundle_dir, const std::filesystem::path& out_dir,
                          const RunConfig& cfg,
                          const std::optional<std::filesystem::path>& query_bundle = std::nullopt);

}  // namespace tokencal
