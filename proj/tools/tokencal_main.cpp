// Copyright 2026 The tokencal Authors
// SPDX-License-Identifier: Apache-2.0

// tokencal: index / retrieve / eval / inspect / gen-fixtures.
// Exit codes: 0 ok, 1 validation or usage error, 2 I/O error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "tokencal/error.hpp"
#include "tokencal/fixtures.hpp"
#include "tokencal/kernels.hpp"
#include "tokencal/pipeline.hpp"

namespace fs = std::filesystem;
using namespace tokencal;

namespace {

struct CalibrationFlags {
  std::string vis_threshold = "mean";
  std::string text_threshold = "mean";
  std::string isa;
};

void add_calibration_flags(CLI::App* cmd, RunConfig& cfg, CalibrationFlags& flags) {
  cmd->add_option("--eta", cfg.rectifier.eta, "attenuation applied to dominant tokens")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmd->add_option("--epsilon", cfg.rectifier.epsilon, "local-contrast stabilizer")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--vis-threshold", flags.vis_threshold, "dominance threshold")
      ->check(CLI::IsMember({"mean", "mean_plus_std", "median"}))
      ->capture_default_str();
  cmd->add_option("--text-threshold", flags.text_threshold, "subspace split threshold")
      ->check(CLI::IsMember({"mean", "median"}))
      ->capture_default_str();
  cmd->add_flag("--disable-cve", cfg.disable_cve, "index raw visual features");
  cmd->add_option("--threads", cfg.threads, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--seed", cfg.seed, "recorded in run_config.json")->capture_default_str();
  cmd->add_option("--isa", flags.isa, "force kernel set")->check(CLI::IsMember({"scalar", "avx2", "neon"}));
}

void apply_flags(RunConfig& cfg, const CalibrationFlags& flags) {
  cfg.rectifier.threshold = parse_visual_threshold(flags.vis_threshold);
  cfg.text_threshold = parse_text_threshold(flags.text_threshold);
  if (!flags.isa.empty()) {
    kernels::set_active_isa(*kernels::parse_isa(flags.isa));
  }
  cfg.rectifier.validate();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training-free calibration and re-ranking for cross-modal retrieval"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML file with flag defaults", false);

  RunConfig cfg;
  CalibrationFlags flags;

  auto* index = app.add_subcommand("index", "calibrate a gallery of visual bundles into an index");
  index->add_option("--gallery", cfg.gallery_dir, "directory of visual bundles")->required();
  index->add_option("--out", cfg.output_dir, "output directory")->required();
  index->add_flag("--skip-bad", cfg.skip_bad, "skip invalid bundles instead of aborting");
  add_calibration_flags(index, cfg, flags);

  auto* retrieve = app.add_subcommand("retrieve", "rank an index for a directory of text bundles");
  retrieve->add_option("--index", cfg.index_file, "index.json from `index`")->required();
  retrieve->add_option("--queries", cfg.query_dir, "directory of text bundles")->required();
  retrieve->add_option("--out", cfg.output_dir, "output directory")->required();
  retrieve->add_option("--lambda", cfg.fusion.lambda, "weight of the base similarity")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  retrieve->add_option("--topk", cfg.fusion.k, "re-ranked candidate count")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  retrieve->add_flag("--disable-dcc", cfg.disable_dcc, "rank by the global text embedding only");
  retrieve->add_flag("--raw-gallery", cfg.raw_gallery, "score against uncalibrated image embeddings");
  add_calibration_flags(retrieve, cfg, flags);

  fs::path results_file;
  fs::path relevance_file;
  fs::path metrics_out;
  auto* eval = app.add_subcommand("eval", "recall@K and mAP of a results file");
  eval->add_option("--results", results_file, "results.jsonl")->required();
  eval->add_option("--relevance", relevance_file, "relevance.json")->required();
  eval->add_option("--out", metrics_out, "write metrics JSON here");

  fs::path bundle_dir;
  fs::path inspect_out;
  fs::path inspect_query;
  auto* inspect = app.add_subcommand("inspect", "dump per-token diagnostics for one bundle");
  inspect->add_option("--bundle", bundle_dir, "visual or text bundle directory")->required();
  inspect->add_option("--out", inspect_out, "output directory")->required();
  inspect->add_option("--query", inspect_query, "text bundle used as the decoupling reference");
  add_calibration_flags(inspect, cfg, flags);

  std::string scenario = "distractor";
  fs::path fixtures_out;
  std::optional<std::size_t> images;
  std::optional<std::size_t> spiked;
  bool audit = false;
  auto* gen = app.add_subcommand("gen-fixtures", "write a seeded synthetic gallery and query set");
  gen->add_option("--out", fixtures_out, "output directory")->required();
  gen->add_option("--scenario", scenario, "preset")
      ->check(CLI::IsMember({"distractor", "single-spike"}))
      ->capture_default_str();
  gen->add_option("--seed", cfg.seed, "generator seed")->capture_default_str();
  gen->add_option("--images", images, "gallery size");
  gen->add_option("--spiked", spiked, "images carrying a distractor spike");
  gen->add_flag("--audit", audit, "attach attention audit tensors");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*index) {
      apply_flags(cfg, flags);
      const IndexSummary s = run_index(cfg);
      std::printf("indexed %zu images (%zu skipped), %zu with dominant tokens, dominant rate %.4f\n", s.images,
                  s.skipped.size(), s.images_with_dominant, s.dominant_token_rate());
      for (const auto& skip : s.skipped) {
        std::fprintf(stderr, "skipped %s: %s\n", skip.path.c_str(), skip.error.c_str());
      }
    } else if (*retrieve) {
      apply_flags(cfg, flags);
      const fs::path file = run_retrieve(cfg);
      std::printf("wrote %s\n", file.string().c_str());
    } else if (*eval) {
      const Metrics m = run_eval(results_file, relevance_file);
      std::printf("%-10s %8s\n", "metric", "value");
      std::printf("%-10s %8.4f\n%-10s %8.4f\n%-10s %8.4f\n%-10s %8.4f\n%-10s %8.4f\n", "recall@1", m.recall_at_1,
                  "recall@5", m.recall_at_5, "recall@10", m.recall_at_10, "recall@50", m.recall_at_50, "mAP", m.map);
      std::printf("%-10s %8zu\n", "queries", m.num_queries);
      if (!metrics_out.empty()) {
        std::ofstream out(metrics_out, std::ios::trunc);
        if (!out) throw Error(ErrorCode::kIo, metrics_out.string(), "cannot write");
        out << m.to_json().dump(2) << '\n';
      }
    } else if (*inspect) {
      apply_flags(cfg, flags);
      std::optional<fs::path> query;
      if (!inspect_query.empty()) query = inspect_query;
      const InspectReport r = run_inspect(bundle_dir, inspect_out, cfg, query);
      std::printf("%s bundle, wrote %zu files to %s\n", r.kind.c_str(), r.files.size(), inspect_out.string().c_str());
    } else if (*gen) {
      FixtureOptions opt = scenario == "distractor" ? distractor_scenario(cfg.seed) : single_spike_scenario(cfg.seed);
      if (images) opt.images = *images;
      if (spiked) opt.spiked = *spiked;
      opt.audit = audit;
      const FixtureSet set = make_fixtures(opt);
      write_fixtures(set, fixtures_out);
      std::printf("wrote %zu images, %zu queries, %zu spiked to %s\n", set.gallery.size(), set.queries.size(),
                  set.spikes.size(), fixtures_out.string().c_str());
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
