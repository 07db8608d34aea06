// Copyright 2026 The tokencal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tokencal/gallery.hpp"

namespace tokencal {

struct FusionConfig {
  double lambda = 0.5;
  std::size_t k = 100;

  void validate() const;
};

struct RankedItem {
  std::string image_id;
  double base_sim = 0.0;
  std::optional<double> disc_sim;  // set only inside the candidate pool
  double fused_score = 0.0;        // equals base_sim outside the pool
};

/// Candidate pool first (sorted by fused score, then image id), followed by
/// the rest of the gallery in base order.
struct RankingResult {
  std::string query_id;
  std::size_t candidate_count = 0;
  std::vector<RankedItem> items;
};

/// Cosine of `text_global` against every gallery entry.
std::vector<double> base_similarity(std::span<const double> text_global, const GalleryIndex& gallery,
                                    GalleryView view = GalleryView::kCalibrated);

/// Gallery positions of the k best scores; ties go to the smaller id.
std::vector<std::size_t> topk_candidates(std::span<const double> sims, std::span<const std::string> ids,
                                         std::size_t k);

/// Two-stage ranking: top-k by base similarity, then
/// lambda * base + (1 - lambda) * cosine(disc_joint, v) inside the pool.
RankingResult fuse_and_rank(const std::string& query_id, std::span<const double> disc_joint,
                            std::span<const double> text_global, const GalleryIndex& gallery,
                            const FusionConfig& cfg, GalleryView view = GalleryView::kCalibrated);

/// Base-similarity ranking of the whole gallery (no discriminative stage).
RankingResult rank_by_base(const std::string& query_id, std::span<const double> text_global,
                           const GalleryIndex& gallery, GalleryView view = GalleryView::kCalibrated);

using Relevance = std::map<std::string, std::set<std::string>>;

struct Metrics {
  double recall_at_1 = 0.0;
  double recall_at_5 = 0.0;
  double recall_at_10 = 0.0;
  double recall_at_50 = 0.0;
  double map = 0.0;
  std::size_t num_queries = 0;

  nlohmann::json to_json() const;
};

/// Average precision of one ranking over the full list.
double average_precision(const RankingResult& result, const std::set<std::string>& relevant);

/// Throws MissingRelevance if a ranked query has no (or an empty) relevance entry.
Metrics evaluate(std::span<const RankingResult> results, const Relevance& relevance);

Relevance load_relevance(const std::filesystem::path& file);
void save_relevance(const Relevance& relevance, const std::filesystem::path& file);

nlohmann::json to_json(const RankingResult& result);
RankingResult ranking_from_json(const nlohmann::json& j);

/// JSON lines, one RankingResult per line, in the given order.
void write_results(std::ostream& out, std::span<const RankingResult> results);
void write_results(const std::filesystem::path& file, std::span<const RankingResult> results);
std::vector<RankingResult> read_results(const std::filesystem::path& file);

}  // namespace tokencal
