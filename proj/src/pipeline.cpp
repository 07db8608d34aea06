// Copyright 2026 The tokencal Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokencal/pipeline.hpp"

#include <algorithm>
#include <exception>
#include <fstream>
#include <variant>

#include "tokencal/error.hpp"
#include "tokencal/heatmap.hpp"
#include "tokencal/kernels.hpp"
#include "tokencal/parallel.hpp"

namespace tokencal {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw Error(ErrorCode::kIo, dir.string(), "output directory is not writable");
  }
}

void write_json(const fs::path& file, const json& doc) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::kIo, file.string(), "cannot write");
  }
  out << doc.dump(2) << '\n';
  if (!out) {
    throw Error(ErrorCode::kIo, file.string(), "write failed");
  }
}

std::string describe(const std::exception_ptr& ep) {
  try {
    std::rethrow_exception(ep);
  } catch (const std::exception& e) {
    return e.what();
  } catch (...) {
    return "unknown error";
  }
}

}  // namespace

void RunConfig::validate() const {
  rectifier.validate();
  fusion.validate();
  if (threads == 0) {
    throw Error(ErrorCode::kInvalidConfig, "threads", "must be >= 1");
  }
}

json RunConfig::to_json() const {
  return {{"gallery_dir", gallery_dir.string()},
          {"query_dir", query_dir.string()},
          {"index_file", index_file.string()},
          {"relevance_file", relevance_file.string()},
          {"output_dir", output_dir.string()},
          {"eta", rectifier.eta},
          {"epsilon", rectifier.epsilon},
          {"vis_threshold", std::string(to_string(rectifier.threshold))},
          {"text_threshold", std::string(to_string(text_threshold))},
          {"lambda", fusion.lambda},
          {"topk", fusion.k},
          {"disable_cve", disable_cve},
          {"disable_dcc", disable_dcc},
          {"skip_bad", skip_bad},
          {"raw_gallery", raw_gallery},
          {"threads", threads},
          {"seed", seed}};
}

json IndexSummary::to_json() const {
  json skipped_list = json::array();
  for (const auto& s : skipped) {
    skipped_list.push_back({{"path", s.path}, {"error", s.error}});
  }
  return {{"images", images},
          {"images_with_dominant", images_with_dominant},
          {"dominant_tokens", dominant_tokens},
          {"patches", patches},
          {"dominant_token_rate", dominant_token_rate()},
          {"skipped", std::move(skipped_list)}};
}

std::vector<fs::path> list_bundles(const fs::path& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    throw Error(ErrorCode::kIo, root.string(), "not a directory");
  }
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(root, ec)) {
    if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) {
      out.push_back(entry.path());
    }
  }
  if (ec) {
    throw Error(ErrorCode::kIo, root.string(), ec.message());
  }
  std::sort(out.begin(), out.end());
  return out;
}

IndexBuild build_index(const RunConfig& cfg) {
  cfg.validate();
  const auto bundles = list_bundles(cfg.gallery_dir);

  struct Item {
    std::string image_id;
    std::vector<double> calibrated;
    std::vector<double> raw;
    std::size_t patches = 0;
    std::size_t dominant = 0;
    std::exception_ptr error;
  };
  std::vector<Item> items(bundles.size());
  parallel_for(bundles.size(), cfg.threads, [&](std::size_t i) {
    try {
      const VisualBundle b = load_visual_bundle(bundles[i]);
      const ImageCalibration cal = calibrate_image(b, cfg.rectifier, !cfg.disable_cve);
      items[i].image_id = b.image_id;
      items[i].calibrated = cal.features.cls_joint;
      items[i].raw = to_double(b.cls_joint);
      items[i].patches = b.num_patches();
      items[i].dominant = cal.report.dominant.size();
    } catch (...) {
      items[i].error = std::current_exception();
    }
  });

  IndexBuild out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    Item& item = items[i];
    if (!item.error) {
      try {
        out.index.add(item.image_id, std::move(item.calibrated), std::move(item.raw), item.dominant);
      } catch (...) {
        item.error = std::current_exception();
      }
    }
    if (item.error) {
      if (!cfg.skip_bad) {
        std::rethrow_exception(item.error);
      }
      out.summary.skipped.push_back({bundles[i].string(), describe(item.error)});
      continue;
    }
    ++out.summary.images;
    out.summary.patches += item.patches;
    out.summary.dominant_tokens += item.dominant;
    if (item.dominant > 0) {
      ++out.summary.images_with_dominant;
    }
  }
  return out;
}

std::vector<RankingResult> retrieve(const GalleryIndex& index, const RunConfig& cfg) {
  cfg.validate();
  if (index.empty()) {
    throw Error(ErrorCode::kEmptyGallery, "index", "no indexed images");
  }
  const auto bundles = list_bundles(cfg.query_dir);
  const GalleryView view = cfg.raw_gallery ? GalleryView::kRaw : GalleryView::kCalibrated;

  std::vector<RankingResult> results(bundles.size());
  std::vector<std::exception_ptr> errors(bundles.size());
  parallel_for(bundles.size(), cfg.threads, [&](std::size_t i) {
    try {
      const TextBundle t = load_text_bundle(bundles[i]);
      if (t.joint_dim() != index.joint_dim()) {
        throw Error(ErrorCode::kDimensionMismatch, t.query_id,
                    "query joint dim " + std::to_string(t.joint_dim()) + " vs index " +
                        std::to_string(index.joint_dim()));
      }
      const auto text_global = to_double(t.eot_joint);
      if (cfg.disable_dcc) {
        results[i] = rank_by_base(t.query_id, text_global, index, view);
      } else {
        const CalibratedQuery q = calibrate_query(t, cfg.text_threshold);
        results[i] = fuse_and_rank(t.query_id, q.disc.joint, text_global, index, cfg.fusion, view);
      }
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::stable_sort(results.begin(), results.end(),
                   [](const RankingResult& a, const RankingResult& b) { return a.query_id < b.query_id; });
  return results;
}

IndexSummary run_index(const RunConfig& cfg) {
  ensure_dir(cfg.output_dir);
  IndexBuild build = build_index(cfg);
  const json summary = build.summary.to_json();
  save_index(build.index, cfg.output_dir / "index.json", cfg.to_json(), summary);
  write_json(cfg.output_dir / "run_config.json", cfg.to_json());
  return build.summary;
}

fs::path run_retrieve(const RunConfig& cfg) {
  ensure_dir(cfg.output_dir);
  const GalleryIndex index = load_index(cfg.index_file);
  const auto results = retrieve(index, cfg);
  const fs::path file = cfg.output_dir / "results.jsonl";
  write_results(file, results);
  write_json(cfg.output_dir / "run_config.json", cfg.to_json());
  return file;
}

Metrics run_eval(const fs::path& results_file, const fs::path& relevance_file) {
  const auto results = read_results(results_file);
  const auto relevance = load_relevance(relevance_file);
  return evaluate(results, relevance);
}

InspectReport run_inspect(const fs::path& bundle_dir, const fs::path& out_dir, const RunConfig& cfg,
                          const std::optional<fs::path>& query_bundle) {
  cfg.rectifier.validate();
  ensure_dir(out_dir);
  InspectReport report;
  Bundle bundle = load_bundle(bundle_dir);

  if (auto* text = std::get_if<TextBundle>(&bundle)) {
    report.kind = "text";
    const SubspaceSplit split = split_subspaces(aggregate_attention(*text), cfg.text_threshold);
    const ModulatedTokens mod = modulate(*text, split);
    report.details = subspace_report(*text, split, mod.modulation);
    const fs::path file = out_dir / "text_subspace.json";
    write_json(file, report.details);
    report.files.push_back(file);
    return report;
  }

  const auto& visual = std::get<VisualBundle>(bundle);
  report.kind = "visual";
  std::string reference_source = "patch_consensus";
  ImageCalibration cal;
  if (query_bundle) {
    const TextBundle q = load_text_bundle(*query_bundle);
    cal = calibrate_image(visual, to_double(q.eot_joint), cfg.rectifier, !cfg.disable_cve);
    reference_source = "query:" + q.query_id;
  } else {
    cal = calibrate_image(visual, cfg.rectifier, !cfg.disable_cve);
  }

  const auto attention = to_double(visual.cls_attention);
  const std::vector<double> mask(cal.mask.target.begin(), cal.mask.target.end());
  const std::pair<const char*, std::span<const double>> grids[] = {
      {"attention", attention}, {"lc", cal.report.lc}, {"gate", cal.features.gate}, {"target_mask", mask}};
  for (const auto& [name, values] : grids) {
    const fs::path csv = out_dir / (std::string(name) + ".csv");
    const fs::path pgm = out_dir / (std::string(name) + ".pgm");
    write_grid_csv(csv, values, visual.grid);
    write_grid_pgm(pgm, values, visual.grid);
    report.files.push_back(csv);
    report.files.push_back(pgm);
  }
  report.details = {{"image_id", visual.image_id},
                    {"grid", {visual.grid.rows, visual.grid.cols}},
                    {"reference", reference_source},
                    {"tau_sim", cal.mask.tau_sim},
                    {"target", cal.mask.target_indices()},
                    {"dominant", cal.report.dominant},
                    {"eta", cfg.rectifier.eta},
                    {"cls_joint_rect", cal.features.cls_joint}};
  const fs::path file = out_dir / "visual_report.json";
  write_json(file, report.details);
  report.files.push_back(file);
  return report;
}

}  // namespace tokencal
