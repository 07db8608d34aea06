// Copyright 2026 The tokencal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Seeded synthetic feature bundles, so the engine can be exercised end to end
// without an exporter or a neural encoder.
//
// Every image i has a matching query i. Patch tokens are built so that their
// projections land on chosen joint-space directions: a content block near the
// image's query direction and a background shared across the gallery. A
// "spiked" image additionally carries one background patch that takes a
// large share of the [CLS] attention and whose embedding points at a
// different (lure) query, which is the failure mode the visual calibration
// targets.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tokencal/feature_model.hpp"
#include "tokencal/rerank.hpp"

namespace tokencal {

struct FixtureOptions {
  std::uint64_t seed = 7;
  std::size_t images = 50;
  std::size_t spiked = 10;
  Grid grid{5, 5};
  std::size_t token_dim = 96;
  std::size_t joint_dim = 64;
  std::size_t text_dim = 80;
  std::size_t words = 6;
  std::size_t general_words = 2;
  std::size_t layers = 4;
  double spike_mass = 0.5;
  double attention_jitter = 0.2;  // stddev of attention logit noise
  double content_bias = 0.5;      // attention logit boost of content patches
  bool audit = false;             // attach q_cls/keys/values/cls_output

  void validate() const;
};

/// The 50-image distractor gallery with 10 spiked images.
FixtureOptions distractor_scenario(std::uint64_t seed);
/// Three images with exactly uniform attention, one of them spiked.
FixtureOptions single_spike_scenario(std::uint64_t seed);

struct SpikeRecord {
  std::string image_id;
  std::size_t patch = 0;
  std::string lure_query_id;
};

struct FixtureSet {
  std::vector<VisualBundle> gallery;
  std::vector<TextBundle> queries;
  Relevance relevance;
  std::vector<SpikeRecord> spikes;
};

FixtureSet make_fixtures(const FixtureOptions& options);

/// root/gallery/<image_id>/, root/queries/<query_id>/, root/relevance.json,
/// root/spikes.json.
void write_fixtures(const FixtureSet& set, const std::filesystem::path& root);

}  // namespace tokencal
