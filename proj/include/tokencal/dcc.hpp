// Copyright 2026 The tokencal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Text-side calibration. Subword tokens are split by how much [EOT]
// attention they receive across layers: high-attention "general" tokens are
// attenuated by m = |D| / (|G| + |D|), low-attention "discriminative" tokens
// are kept, and a discriminative token is built from both sets by a
// parameter-free self-attention step followed by cross-attention.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tokencal/feature_model.hpp"
#include "tokencal/linalg.hpp"

namespace tokencal {

enum class TextThreshold { kMean, kMedian };

std::string_view to_string(TextThreshold t);
TextThreshold parse_text_threshold(std::string_view name);

struct SubspaceSplit {
  std::vector<double> alpha;
  double tau_t = 0.0;
  std::vector<std::size_t> general;         // alpha_i >= tau_t
  std::vector<std::size_t> discriminative;  // alpha_i <  tau_t
};

struct ModulatedTokens {
  Matrix<double> attenuated;      // (1 - m) * general rows
  Matrix<double> discriminative;  // unscaled
  double modulation = 0.0;        // m
};

struct AttentionOutput {
  std::vector<double> output;
  std::vector<double> weights;  // softmax over keys, sums to 1
};

struct DiscriminativeToken {
  std::vector<double> seed;         // r: mean of [t_a; t_d]
  std::vector<double> self_output;  // t_r
  std::vector<double> token;        // t̂_r, token space
  std::vector<double> joint;        // unit-norm, joint space
  std::vector<double> self_weights;   // over [r; t_a; t_d]
  std::vector<double> cross_weights;  // over [t_a; t_d]
};

struct CalibratedQuery {
  std::string query_id;
  SubspaceSplit split;
  ModulatedTokens tokens;
  DiscriminativeToken disc;
  std::vector<double> eot_joint;  // exported global, unmodified
};

/// alpha_i = sum_l gamma_l A^l_i / sum_l gamma_l.
std::vector<double> aggregate_attention(const TextBundle& text);
std::vector<double> aggregate_attention(const Matrix<double>& attention, std::span<const double> layer_norms);

SubspaceSplit split_subspaces(std::span<const double> alpha, TextThreshold strategy = TextThreshold::kMean);

ModulatedTokens modulate(const TextBundle& text, const SubspaceSplit& split);

/// softmax(query · keysᵀ / sqrt(width)) · keys, keys doubling as values.
AttentionOutput scaled_dot_attention(std::span<const double> query, const Matrix<double>& keys);

/// Builds t̂_r from the attenuated and discriminative token rows and maps it
/// into the joint space with the text projection. Throws EmptyQuery if both
/// sets are empty, ZeroVector if the projection vanishes.
DiscriminativeToken build_discriminative_token(const Matrix<double>& attenuated,
                                               const Matrix<double>& discriminative,
                                               const Matrix<float>& text_projection);
DiscriminativeToken build_discriminative_token(const ModulatedTokens& tokens, const TextBundle& text);

CalibratedQuery calibrate_query(const TextBundle& text, TextThreshold strategy = TextThreshold::kMean);

/// Per-query debug record: token strings, alpha, tau_t, per-token subspace
/// membership and m.
nlohmann::json subspace_report(const TextBundle& text, const SubspaceSplit& split, double modulation);

}  // namespace tokencal
