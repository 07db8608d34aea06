// Copyright 2026 The tokencal Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "builders.hpp"
#include "tokencal/cve.hpp"
#include "tokencal/dcc.hpp"
#include "tokencal/fixtures.hpp"
#include "tokencal/pipeline.hpp"
#include "tokencal/rerank.hpp"

using namespace tokencal;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<double> simplex(std::size_t n, std::mt19937_64& rng) {
  const auto f = testkit::random_simplex(n, rng);
  return {f.begin(), f.end()};
}

std::vector<double> random_unit(std::size_t d, std::mt19937_64& rng) {
  return normalized(to_double(testkit::random_matrix(1, d, rng).row(0)));
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 1 -------------------------------------------------------------------------------
Outcome local_contrast_oracle() {
  Outcome o;
  std::mt19937_64 rng(101);
  std::vector<std::vector<double>> grids;
  for (int t = 0; t < 200; ++t) grids.push_back(simplex(49, rng));
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (const auto& a : grids) {
    const auto lc = local_contrast(a, {7, 7}, 1e-6);
    worst = std::max(worst, testkit::max_abs_diff(lc, oracle::local_contrast(a, 7, 7, 1e-6)));
  }
  const double elapsed = seconds_since(t0);
  o.require(worst <= 1e-9, "max |LC - oracle| = " + fmt("%.3g", worst));
  o.require(elapsed < 1.0, "runtime " + fmt("%.3f s", elapsed));
  if (o.pass) o.detail = "200 grids, max err " + fmt("%.2e", worst) + ", " + fmt("%.3f s", elapsed);
  return o;
}

// 2 -------------------------------------------------------------------------------
Outcome dominant_set_oracle() {
  Outcome o;
  std::mt19937_64 rng(102);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t spikes_found = 0;
  for (int t = 0; t < 200; ++t) {
    const Grid g{2 + rng() % 7, 2 + rng() % 7};
    auto a = simplex(g.size(), rng);
    // Spike on a boundary cell (edge or corner).
    const std::size_t r = (rng() % 2 == 0) ? 0 : g.rows - 1;
    const std::size_t spike = r * g.cols + rng() % g.cols;
    a[spike] += 0.5 + u(rng);
    const double total = std::accumulate(a.begin(), a.end(), 0.0);
    for (double& x : a) x /= total;

    std::vector<bool> target(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) target[i] = u(rng) < 0.35;
    target[spike] = false;
    RegionMask mask;
    mask.target.assign(target.begin(), target.end());

    const auto report = detect_dominant(a, g, mask, RectifierConfig{});
    const auto lc = oracle::local_contrast(a, static_cast<int>(g.rows), static_cast<int>(g.cols), 1e-6);
    const auto expect = oracle::dominant_set(lc, target, static_cast<int>(g.rows), static_cast<int>(g.cols));
    const std::set<std::size_t> got(report.dominant.begin(), report.dominant.end());
    o.require(got == expect, "grid " + std::to_string(t) + ": dominant set differs from exhaustive comparison");
    spikes_found += got.count(spike);
  }
  o.require(spikes_found == 200, "boundary spike missed in " + std::to_string(200 - spikes_found) + " grids");
  if (o.pass) o.detail = "200 grids, exact set equality, all boundary spikes detected";
  return o;
}

// 3 -------------------------------------------------------------------------------
Outcome degenerate_identities() {
  Outcome o;
  std::mt19937_64 rng(103);

  // (a) uniform attention: empty dominant set, bitwise equal to eta = 1
  for (int t = 0; t < 50; ++t) {
    auto b = testkit::random_visual("u", {2 + rng() % 6, 2 + rng() % 6}, 12, 8, rng);
    std::fill(b.cls_attention.begin(), b.cls_attention.end(), 1.0f / static_cast<float>(b.grid.size()));
    RectifierConfig cfg;
    const auto cal = calibrate_image(b, cfg);
    cfg.eta = 1.0;
    const auto identity = calibrate_image(b, cfg);
    o.require(cal.report.dominant.empty(), "uniform attention produced a dominant token");
    o.require(cal.features.cls_joint == identity.features.cls_joint, "uniform output differs from eta=1 bitwise");
  }

  // (b) lambda = 1 keeps the base ordering inside C_k
  for (int t = 0; t < 50; ++t) {
    GalleryIndex g;
    const std::size_t n = 3 + rng() % 40;
    for (std::size_t i = 0; i < n; ++i) g.add("img_" + std::to_string(i), random_unit(16, rng), random_unit(16, rng));
    const auto text = random_unit(16, rng);
    const auto disc = random_unit(16, rng);
    const FusionConfig cfg{1.0, 1 + rng() % n};
    const auto fused = fuse_and_rank("q", disc, text, g, cfg);
    const auto base = rank_by_base("q", text, g);
    for (std::size_t r = 0; r < fused.candidate_count; ++r) {
      o.require(fused.items[r].image_id == base.items[r].image_id, "lambda=1 reordered the candidate set");
    }
  }

  // (c) both calibrations disabled: plain cosine retrieval
  testkit::TempDir tmp("accept_plain");
  FixtureOptions opt = distractor_scenario(17);
  opt.images = 20;
  opt.spiked = 4;
  const FixtureSet set = make_fixtures(opt);
  write_fixtures(set, tmp.path());
  RunConfig rc;
  rc.gallery_dir = tmp / "gallery";
  rc.query_dir = tmp / "queries";
  rc.disable_cve = true;
  rc.disable_dcc = true;
  const auto build = build_index(rc);
  const auto results = retrieve(build.index, rc);
  std::vector<oracle::Vec> pooled_joint;
  std::vector<std::string> ids;
  for (const auto& v : set.gallery) {
    const auto in = testkit::visual_in(v);
    oracle::Vec pooled(in.patches[0].size(), 0.0);
    for (std::size_t p = 0; p < in.patches.size(); ++p) {
      for (std::size_t k = 0; k < pooled.size(); ++k) pooled[k] += in.attention[p] * in.patches[p][k];
    }
    pooled_joint.push_back(oracle::project(pooled, in.projection));
    ids.push_back(v.image_id);
  }
  double worst = 0.0;
  for (std::size_t q = 0; q < set.queries.size(); ++q) {
    const auto text = testkit::vec(set.queries[q].eot_joint);
    std::vector<std::pair<std::string, double>> scored;
    std::map<std::string, double> by_id;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const double c = oracle::cosine(text, pooled_joint[i]);
      scored.emplace_back(ids[i], c);
      by_id[ids[i]] = c;
    }
    const auto want = oracle::order_by(scored);
    const auto& got = results[q];
    o.require(got.query_id == set.queries[q].query_id, "query order differs");
    for (std::size_t r = 0; r < got.items.size(); ++r) {
      worst = std::max(worst, std::abs(got.items[r].base_sim - by_id[got.items[r].image_id]));
      o.require(!got.items[r].disc_sim.has_value(), "disabled text calibration still produced disc_sim");
      o.require(got.items[r].image_id == want[r], "plain cosine ordering differs from oracle");
    }
  }
  o.require(worst <= 1e-9, "cosine error " + fmt("%.3g", worst));
  if (o.pass) {
    o.detail = "uniform==eta1 bitwise (50), lambda=1 order (50), plain cosine max err " + fmt("%.2e", worst);
  }
  return o;
}

// 4 -------------------------------------------------------------------------------
Outcome partition_and_normalization() {
  Outcome o;
  std::mt19937_64 rng(104);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const auto b = testkit::random_visual("p", {2 + rng() % 6, 2 + rng() % 6}, 10, 6, rng);
    RectifierConfig cfg;
    cfg.threshold = static_cast<VisualThreshold>(t % 3);
    cfg.eta = u(rng);
    const auto cal = calibrate_image(b, random_unit(6, rng), cfg);
    auto all = cal.mask.target_indices();
    const auto bg = cal.mask.background_indices();
    std::set<std::size_t> seen(all.begin(), all.end());
    for (auto i : bg) o.require(seen.insert(i).second, "target and background overlap");
    o.require(seen.size() == b.grid.size() && *seen.rbegin() == b.grid.size() - 1, "regions do not cover all patches");
    const double mass = std::accumulate(cal.features.attention.begin(), cal.features.attention.end(), 0.0);
    o.require(std::abs(mass - 1.0) <= 1e-9, "renormalized attention sums to " + fmt("%.17g", mass));
  }
  for (int t = 0; t < 500; ++t) {
    const auto text = testkit::random_text("q", 1 + rng() % 16, 6, 4, 1 + rng() % 8, rng);
    const auto alpha = aggregate_attention(text);
    for (std::size_t i = 0; i < alpha.size(); ++i) {
      double lo = text.eot_attention(0, i);
      double hi = lo;
      for (std::size_t l = 1; l < text.num_layers(); ++l) {
        lo = std::min<double>(lo, text.eot_attention(l, i));
        hi = std::max<double>(hi, text.eot_attention(l, i));
      }
      o.require(alpha[i] >= lo - 1e-12 && alpha[i] <= hi + 1e-12, "alpha outside the per-layer hull");
    }
    const auto split = split_subspaces(alpha);
    const auto mod = modulate(text, split);
    const double expect = static_cast<double>(split.discriminative.size()) /
                          static_cast<double>(split.general.size() + split.discriminative.size());
    o.require(mod.modulation == expect, "m != |D|/(|G|+|D|)");
  }
  if (o.pass) o.detail = "200 masks partition, attention sums to 1, 500 text bundles alpha-bounded, m exact";
  return o;
}

// 5 -------------------------------------------------------------------------------
Outcome attention_layer_oracle() {
  Outcome o;
  std::mt19937_64 rng(105);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto text = testkit::random_text("q", 1 + rng() % 12, 16, 8, 4, rng);
    const auto split = split_subspaces(aggregate_attention(text));
    const auto mod = modulate(text, split);
    const auto tok = build_discriminative_token(mod, text);
    const auto ref = oracle::calibrate_text(testkit::text_in(text), 0);
    worst = std::max({worst, testkit::max_abs_diff(tok.token, ref.disc.token),
                      testkit::max_abs_diff(tok.joint, ref.disc.joint)});

    oracle::Mat memory = testkit::mat(mod.attenuated);
    for (const auto& row : testkit::mat(mod.discriminative)) memory.push_back(row);
    const double wsum = std::accumulate(tok.cross_weights.begin(), tok.cross_weights.end(), 0.0);
    o.require(std::abs(wsum - 1.0) <= 1e-12, "cross-attention weights do not sum to 1");
    o.require(std::all_of(tok.cross_weights.begin(), tok.cross_weights.end(), [](double w) { return w >= 0.0; }),
              "negative attention weight");
    for (std::size_t k = 0; k < tok.token.size(); ++k) {
      double combo = 0.0;
      double lo = memory[0][k];
      double hi = lo;
      for (std::size_t j = 0; j < memory.size(); ++j) {
        combo += tok.cross_weights[j] * memory[j][k];
        lo = std::min(lo, memory[j][k]);
        hi = std::max(hi, memory[j][k]);
      }
      o.require(std::abs(combo - tok.token[k]) <= 1e-9, "token is not the weighted combination of its memory");
      o.require(tok.token[k] >= lo - 1e-12 && tok.token[k] <= hi + 1e-12, "token leaves the convex hull");
    }
  }
  o.require(worst <= 1e-9, "max |token - oracle| = " + fmt("%.3g", worst));
  if (o.pass) o.detail = "100 queries, max err " + fmt("%.2e", worst) + ", convex hull holds";
  return o;
}

// 6 -------------------------------------------------------------------------------
Outcome metric_oracle() {
  Outcome o;
  std::mt19937_64 rng(106);
  for (int t = 0; t < 50; ++t) {
    const std::size_t items = 1 + rng() % 20;
    const std::size_t queries = 1 + rng() % 10;
    std::vector<RankingResult> results;
    std::vector<std::vector<std::string>> orders;
    std::vector<std::set<std::string>> rel_sets;
    Relevance rel;
    for (std::size_t q = 0; q < queries; ++q) {
      std::vector<std::string> order;
      for (std::size_t i = 0; i < items; ++i) order.push_back("g" + std::to_string(i));
      std::shuffle(order.begin(), order.end(), rng);
      std::set<std::string> relevant;
      const std::size_t nrel = 1 + rng() % std::min<std::size_t>(4, items);
      while (relevant.size() < nrel) relevant.insert("g" + std::to_string(rng() % items));
      RankingResult r;
      r.query_id = "q" + std::to_string(q);
      for (std::size_t i = 0; i < order.size(); ++i) {
        const double s = 1.0 - 0.01 * static_cast<double>(i);
        r.items.push_back({order[i], s, std::nullopt, s});
      }
      rel[r.query_id] = relevant;
      results.push_back(std::move(r));
      orders.push_back(order);
      rel_sets.push_back(relevant);
    }
    const Metrics m = evaluate(results, rel);
    double ap = 0.0;
    for (std::size_t q = 0; q < queries; ++q) ap += oracle::average_precision(orders[q], rel_sets[q]);
    ap /= static_cast<double>(queries);
    o.require(m.recall_at_1 == oracle::recall_at(orders, rel_sets, 1), "recall@1 differs");
    o.require(m.recall_at_5 == oracle::recall_at(orders, rel_sets, 5), "recall@5 differs");
    o.require(m.recall_at_10 == oracle::recall_at(orders, rel_sets, 10), "recall@10 differs");
    o.require(m.recall_at_50 == oracle::recall_at(orders, rel_sets, 50), "recall@50 differs");
    o.require(m.map == ap, "mAP differs: " + fmt("%.17g", m.map) + " vs " + fmt("%.17g", ap));
  }
  if (o.pass) o.detail = "50 galleries, recall@{1,5,10,50} and mAP exact";
  return o;
}

// 7 -------------------------------------------------------------------------------
Outcome distractor_scenario_check() {
  Outcome o;
  const auto t0 = Clock::now();
  testkit::TempDir tmp("accept_distractor");
  const FixtureSet set = make_fixtures(distractor_scenario(7));
  write_fixtures(set, tmp.path());

  RunConfig calibrated;
  calibrated.gallery_dir = tmp / "gallery";
  calibrated.query_dir = tmp / "queries";
  calibrated.rectifier.eta = 0.1;
  RunConfig baseline = calibrated;
  baseline.raw_gallery = true;
  baseline.disable_dcc = true;

  const auto build = build_index(calibrated);
  const Metrics m_cal = evaluate(retrieve(build.index, calibrated), set.relevance);
  const Metrics m_base = evaluate(retrieve(build.index, baseline), set.relevance);

  // Brute-force simulation of both pipelines from the in-memory fixtures.
  std::vector<std::string> ids;
  std::vector<oracle::Vec> raw;
  std::vector<oracle::Vec> cal;
  for (const auto& v : set.gallery) {
    ids.push_back(v.image_id);
    raw.push_back(testkit::vec(v.cls_joint));
    cal.push_back(oracle::calibrate_visual(testkit::visual_in(v), nullptr, 0, 0.1, 1e-6, true).joint);
  }
  std::vector<std::vector<std::string>> sim_base;
  std::vector<std::vector<std::string>> sim_cal;
  std::vector<std::set<std::string>> rel;
  for (const auto& q : set.queries) {
    const auto text = testkit::vec(q.eot_joint);
    const auto tq = oracle::calibrate_text(testkit::text_in(q), 0);
    std::vector<std::pair<std::string, double>> scored;
    oracle::Vec base;
    oracle::Vec disc;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      scored.emplace_back(ids[i], oracle::cosine(text, raw[i]));
      base.push_back(oracle::cosine(text, cal[i]));
      disc.push_back(oracle::cosine(tq.disc.joint, cal[i]));
    }
    sim_base.push_back(oracle::order_by(scored));
    sim_cal.push_back(oracle::fused_order(ids, base, disc, 0.5, 100));
    rel.push_back(set.relevance.at(q.query_id));
  }
  const double sim_r1_base = oracle::recall_at(sim_base, rel, 1);
  const double sim_r1_cal = oracle::recall_at(sim_cal, rel, 1);
  const double elapsed = seconds_since(t0);

  o.require(m_cal.recall_at_1 == sim_r1_cal, "calibrated recall@1 " + fmt("%.4f", m_cal.recall_at_1) +
                                                 " != simulation " + fmt("%.4f", sim_r1_cal));
  o.require(m_base.recall_at_1 == sim_r1_base, "baseline recall@1 " + fmt("%.4f", m_base.recall_at_1) +
                                                   " != simulation " + fmt("%.4f", sim_r1_base));
  o.require(m_cal.recall_at_1 > m_base.recall_at_1, "calibrated recall@1 " + fmt("%.4f", m_cal.recall_at_1) +
                                                        " not above baseline " + fmt("%.4f", m_base.recall_at_1));
  o.require(elapsed < 5.0, "runtime " + fmt("%.2f s", elapsed));
  if (o.pass) {
    o.detail = "recall@1 " + fmt("%.2f", m_base.recall_at_1) + " -> " + fmt("%.2f", m_cal.recall_at_1) +
               " (simulation agrees), " + fmt("%.2f s", elapsed);
  }
  return o;
}

// 8 -------------------------------------------------------------------------------
Outcome determinism() {
  Outcome o;
  testkit::TempDir tmp("accept_det");
  FixtureOptions opt = distractor_scenario(23);
  opt.images = 24;
  opt.spiked = 5;
  write_fixtures(make_fixtures(opt), tmp / "fx");
  RunConfig cfg;
  cfg.gallery_dir = tmp / "fx/gallery";
  cfg.query_dir = tmp / "fx/queries";
  cfg.output_dir = tmp / "idx";
  cfg.threads = 3;
  run_index(cfg);
  cfg.index_file = tmp / "idx/index.json";
  cfg.output_dir = tmp / "run1";
  const auto first = slurp(run_retrieve(cfg));
  cfg.output_dir = tmp / "run2";
  cfg.threads = 1;
  const auto second = slurp(run_retrieve(cfg));
  o.require(!first.empty(), "empty results file");
  o.require(first == second, "results files differ");
  if (o.pass) o.detail = std::to_string(first.size()) + " bytes, identical across runs and thread counts";
  return o;
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"local-contrast oracle", local_contrast_oracle},
      {"dominant-set oracle", dominant_set_oracle},
      {"degenerate identities", degenerate_identities},
      {"partition and normalization", partition_and_normalization},
      {"attention-layer oracle", attention_layer_oracle},
      {"metric oracle", metric_oracle},
      {"distractor scenario", distractor_scenario_check},
      {"determinism", determinism},
  };
  int failures = 0;
  int n = 0;
  for (const auto& [name, fn] : criteria) {
    ++n;
    Outcome out;
    try {
      out = fn();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    failures += out.pass ? 0 : 1;
    std::printf("%s  AC%d %-28s %s\n", out.pass ? "PASS" : "FAIL", n, name, out.detail.c_str());
  }
  std::printf("%d/%d criteria passed\n", n - failures, n);
  return failures == 0 ? 0 : 1;
}
