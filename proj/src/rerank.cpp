// Copyright 2026 The tokencal Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokencal/rerank.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "tokencal/error.hpp"
#include "tokencal/kernels.hpp"
#include "tokencal/linalg.hpp"

namespace tokencal {

using nlohmann::json;

void FusionConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "lambda", "must lie in [0, 1]");
  }
  if (k < 1) {
    throw Error(ErrorCode::kInvalidConfig, "topk", "must be >= 1");
  }
}

namespace {

void require_gallery(const GalleryIndex& gallery, std::size_t dim, const char* what) {
  if (gallery.empty()) {
    throw Error(ErrorCode::kEmptyGallery, "gallery", "no indexed images");
  }
  if (dim != gallery.joint_dim()) {
    throw Error(ErrorCode::kDimensionMismatch, what,
                std::to_string(dim) + " dims vs index joint dim " + std::to_string(gallery.joint_dim()));
  }
}

// Descending score, ascending id.
struct ScoreOrder {
  std::span<const double> scores;
  std::span<const std::string> ids;
  bool operator()(std::size_t a, std::size_t b) const {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  }
};

}  // namespace

std::vector<double> base_similarity(std::span<const double> text_global, const GalleryIndex& gallery,
                                    GalleryView view) {
  require_gallery(gallery, text_global.size(), "text_global");
  const auto query = normalized(text_global, "text_global");
  std::vector<double> sims(gallery.size());
  for (std::size_t i = 0; i < gallery.size(); ++i) {
    sims[i] = kernels::dot(std::span<const double>(query), gallery.unit(i, view));
  }
  return sims;
}

std::vector<std::size_t> topk_candidates(std::span<const double> sims, std::span<const std::string> ids,
                                         std::size_t k) {
  if (sims.size() != ids.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "topk", "scores and ids differ in length");
  }
  std::vector<std::size_t> order(sims.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t take = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    ScoreOrder{sims, ids});
  order.resize(take);
  return order;
}

RankingResult fuse_and_rank(const std::string& query_id, std::span<const double> disc_joint,
                            std::span<const double> text_global, const GalleryIndex& gallery,
                            const FusionConfig& cfg, GalleryView view) {
  cfg.validate();
  require_gallery(gallery, disc_joint.size(), "t_r_joint");
  const auto sims = base_similarity(text_global, gallery, view);
  const auto ids = gallery.ids();
  const auto full = topk_candidates(sims, ids, gallery.size());
  const std::size_t k = std::min(cfg.k, gallery.size());

  const auto disc = normalized(disc_joint, "t_r_joint");
  std::vector<double> fused(gallery.size());
  std::vector<double> disc_sim(gallery.size());
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t i = full[r];
    disc_sim[i] = kernels::dot(std::span<const double>(disc), gallery.unit(i, view));
    fused[i] = cfg.lambda * sims[i] + (1.0 - cfg.lambda) * disc_sim[i];
  }
  std::vector<std::size_t> pool(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(pool.begin(), pool.end(), ScoreOrder{fused, ids});

  RankingResult out;
  out.query_id = query_id;
  out.candidate_count = k;
  out.items.reserve(gallery.size());
  for (std::size_t i : pool) {
    out.items.push_back({ids[i], sims[i], disc_sim[i], fused[i]});
  }
  for (std::size_t r = k; r < full.size(); ++r) {
    const std::size_t i = full[r];
    out.items.push_back({ids[i], sims[i], std::nullopt, sims[i]});
  }
  return out;
}

RankingResult rank_by_base(const std::string& query_id, std::span<const double> text_global,
                           const GalleryIndex& gallery, GalleryView view) {
  const auto sims = base_similarity(text_global, gallery, view);
  const auto ids = gallery.ids();
  RankingResult out;
  out.query_id = query_id;
  out.candidate_count = 0;
  for (std::size_t i : topk_candidates(sims, ids, gallery.size())) {
    out.items.push_back({ids[i], sims[i], std::nullopt, sims[i]});
  }
  return out;
}

// --- evaluation -------------------------------------------------------------------

json Metrics::to_json() const {
  return {{"recall@1", recall_at_1}, {"recall@5", recall_at_5}, {"recall@10", recall_at_10},
          {"recall@50", recall_at_50}, {"mAP", map},            {"queries", num_queries}};
}

double average_precision(const RankingResult& result, const std::set<std::string>& relevant) {
  if (relevant.empty()) {
    throw Error(ErrorCode::kMissingRelevance, result.query_id, "empty relevant set");
  }
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t r = 0; r < result.items.size(); ++r) {
    if (relevant.contains(result.items[r].image_id)) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(relevant.size());
}

Metrics evaluate(std::span<const RankingResult> results, const Relevance& relevance) {
  constexpr std::size_t kCutoffs[] = {1, 5, 10, 50};
  std::size_t hits_at[4] = {0, 0, 0, 0};
  double ap_sum = 0.0;
  for (const auto& result : results) {
    auto it = relevance.find(result.query_id);
    if (it == relevance.end() || it->second.empty()) {
      throw Error(ErrorCode::kMissingRelevance, result.query_id, "query has no relevant images");
    }
    const auto& relevant = it->second;
    std::size_t first_hit = result.items.size();
    for (std::size_t r = 0; r < result.items.size(); ++r) {
      if (relevant.contains(result.items[r].image_id)) {
        first_hit = r;
        break;
      }
    }
    for (std::size_t c = 0; c < 4; ++c) {
      if (first_hit < kCutoffs[c]) ++hits_at[c];
    }
    ap_sum += average_precision(result, relevant);
  }
  Metrics m;
  m.num_queries = results.size();
  if (results.empty()) {
    return m;
  }
  const auto q = static_cast<double>(results.size());
  m.recall_at_1 = static_cast<double>(hits_at[0]) / q;
  m.recall_at_5 = static_cast<double>(hits_at[1]) / q;
  m.recall_at_10 = static_cast<double>(hits_at[2]) / q;
  m.recall_at_50 = static_cast<double>(hits_at[3]) / q;
  m.map = ap_sum / q;
  return m;
}

// --- files ---------------------------------------------------------------------------

Relevance load_relevance(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) {
    throw Error(ErrorCode::kIo, file.string(), "cannot open relevance file");
  }
  try {
    json doc;
    in >> doc;
    Relevance out;
    for (const auto& [query, images] : doc.items()) {
      auto list = images.get<std::vector<std::string>>();
      out[query] = std::set<std::string>(list.begin(), list.end());
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kManifestInvalid, file.string(), e.what());
  }
}

void save_relevance(const Relevance& relevance, const std::filesystem::path& file) {
  json doc = json::object();
  for (const auto& [query, images] : relevance) {
    doc[query] = std::vector<std::string>(images.begin(), images.end());
  }
  std::ofstream out(file, std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::kIo, file.string(), "cannot write relevance file");
  }
  out << doc.dump(2) << '\n';
}

json to_json(const RankingResult& result) {
  json items = json::array();
  for (const auto& item : result.items) {
    items.push_back({{"image_id", item.image_id},
                     {"base_sim", item.base_sim},
                     {"disc_sim", item.disc_sim ? json(*item.disc_sim) : json(nullptr)},
                     {"fused_score", item.fused_score}});
  }
  return {{"query_id", result.query_id}, {"candidates", result.candidate_count}, {"ranking", std::move(items)}};
}

RankingResult ranking_from_json(const json& j) {
  RankingResult r;
  r.query_id = j.at("query_id").get<std::string>();
  r.candidate_count = j.value("candidates", std::size_t{0});
  for (const auto& item : j.at("ranking")) {
    RankedItem it;
    it.image_id = item.at("image_id").get<std::string>();
    it.base_sim = item.at("base_sim").get<double>();
    if (!item.at("disc_sim").is_null()) {
      it.disc_sim = item.at("disc_sim").get<double>();
    }
    it.fused_score = item.at("fused_score").get<double>();
    r.items.push_back(std::move(it));
  }
  return r;
}

void write_results(std::ostream& out, std::span<const RankingResult> results) {
  for (const auto& r : results) {
    out << to_json(r).dump() << '\n';
  }
}

void write_results(const std::filesystem::path& file, std::span<const RankingResult> results) {
  std::ofstream out(file, std::ios::trunc | std::ios::binary);
  if (!out) {
    throw Error(ErrorCode::kIo, file.string(), "cannot write results");
  }
  write_results(out, results);
  if (!out) {
    throw Error(ErrorCode::kIo, file.string(), "write failed");
  }
}

std::vector<RankingResult> read_results(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) {
    throw Error(ErrorCode::kIo, file.string(), "cannot open results");
  }
  std::vector<RankingResult> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(ranking_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kManifestInvalid, file.string() + ":" + std::to_string(lineno), e.what());
    }
  }
  return out;
}

}  // namespace tokencal
