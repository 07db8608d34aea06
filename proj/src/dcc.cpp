// Copyright 2026 The tokencal Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokencal/dcc.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tokencal/error.hpp"
#include "tokencal/kernels.hpp"

namespace tokencal {

std::string_view to_string(TextThreshold t) { return t == TextThreshold::kMedian ? "median" : "mean"; }

TextThreshold parse_text_threshold(std::string_view name) {
  if (name == "mean") return TextThreshold::kMean;
  if (name == "median") return TextThreshold::kMedian;
  throw Error(ErrorCode::kInvalidConfig, "text-threshold", "unknown strategy '" + std::string(name) + "'");
}

std::vector<double> aggregate_attention(const Matrix<double>& attention, std::span<const double> layer_norms) {
  if (attention.rows() == 0 || attention.rows() != layer_norms.size()) {
    throw Error(ErrorCode::kShapeMismatch, "eot_norms", "one norm per attention layer required");
  }
  double total = 0.0;
  for (double g : layer_norms) {
    if (!(g > 0.0)) {
      throw Error(ErrorCode::kNonPositiveNorm, "eot_norms", "layer norm must be > 0");
    }
    total += g;
  }
  std::vector<double> alpha(attention.cols(), 0.0);
  for (std::size_t l = 0; l < attention.rows(); ++l) {
    kernels::axpy(layer_norms[l], attention.row(l), alpha);
  }
  for (double& a : alpha) {
    a /= total;
  }
  return alpha;
}

std::vector<double> aggregate_attention(const TextBundle& text) {
  return aggregate_attention(to_double(text.eot_attention), to_double(text.eot_norms));
}

SubspaceSplit split_subspaces(std::span<const double> alpha, TextThreshold strategy) {
  if (alpha.empty()) {
    throw Error(ErrorCode::kEmptyQuery, "alpha", "no tokens to split");
  }
  SubspaceSplit split;
  split.alpha.assign(alpha.begin(), alpha.end());
  split.tau_t = strategy == TextThreshold::kMedian ? median(alpha) : mean(alpha);
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    (alpha[i] >= split.tau_t ? split.general : split.discriminative).push_back(i);
  }
  return split;
}

ModulatedTokens modulate(const TextBundle& text, const SubspaceSplit& split) {
  const std::size_t n = text.num_tokens();
  if (n == 0) {
    throw Error(ErrorCode::kEmptyQuery, text.query_id, "query has no subword tokens");
  }
  if (split.general.size() + split.discriminative.size() != n) {
    throw Error(ErrorCode::kShapeMismatch, text.query_id, "subspace split does not cover the query tokens");
  }
  const std::size_t d = text.token_dim();
  ModulatedTokens out;
  out.modulation = static_cast<double>(split.discriminative.size()) / static_cast<double>(n);
  const double keep = 1.0 - out.modulation;

  out.attenuated = Matrix<double>(split.general.size(), d);
  for (std::size_t r = 0; r < split.general.size(); ++r) {
    auto src = text.token_embeddings.row(split.general[r]);
    auto dst = out.attenuated.row(r);
    for (std::size_t k = 0; k < d; ++k) {
      dst[k] = keep * static_cast<double>(src[k]);
    }
  }
  out.discriminative = Matrix<double>(split.discriminative.size(), d);
  for (std::size_t r = 0; r < split.discriminative.size(); ++r) {
    auto src = text.token_embeddings.row(split.discriminative[r]);
    std::copy(src.begin(), src.end(), out.discriminative.row(r).begin());
  }
  return out;
}

AttentionOutput scaled_dot_attention(std::span<const double> query, const Matrix<double>& keys) {
  if (keys.rows() == 0) {
    throw Error(ErrorCode::kEmptyQuery, "attention", "no keys");
  }
  if (keys.cols() != query.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "attention", "query width differs from key width");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(query.size()));
  AttentionOutput out;
  out.weights.resize(keys.rows());
  for (std::size_t j = 0; j < keys.rows(); ++j) {
    out.weights[j] = kernels::dot(query, keys.row(j)) * scale;
  }
  const double peak = *std::max_element(out.weights.begin(), out.weights.end());
  double z = 0.0;
  for (double& w : out.weights) {
    w = std::exp(w - peak);
    z += w;
  }
  for (double& w : out.weights) {
    w /= z;
  }
  out.output.assign(keys.cols(), 0.0);
  for (std::size_t j = 0; j < keys.rows(); ++j) {
    kernels::axpy(out.weights[j], keys.row(j), out.output);
  }
  return out;
}

DiscriminativeToken build_discriminative_token(const Matrix<double>& attenuated,
                                               const Matrix<double>& discriminative,
                                               const Matrix<float>& text_projection) {
  const std::size_t rows = attenuated.rows() + discriminative.rows();
  if (rows == 0) {
    throw Error(ErrorCode::kEmptyQuery, "t_a/t_d", "both token sets are empty");
  }
  const std::size_t d = attenuated.rows() > 0 ? attenuated.cols() : discriminative.cols();
  if (attenuated.rows() > 0 && discriminative.rows() > 0 && attenuated.cols() != discriminative.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "t_a/t_d", "token widths differ");
  }

  // Key/value sequence [t_a; t_d].
  Matrix<double> memory(rows, d);
  for (std::size_t r = 0; r < attenuated.rows(); ++r) {
    std::copy_n(attenuated.row(r).begin(), d, memory.row(r).begin());
  }
  for (std::size_t r = 0; r < discriminative.rows(); ++r) {
    std::copy_n(discriminative.row(r).begin(), d, memory.row(attenuated.rows() + r).begin());
  }

  DiscriminativeToken out;
  out.seed.assign(d, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    kernels::axpy(1.0, std::span<const double>(memory.row(r)), out.seed);
  }
  for (double& x : out.seed) {
    x /= static_cast<double>(rows);
  }

  // Self-attention over [r; t_a; t_d]; only the r position's output is kept.
  Matrix<double> sequence(rows + 1, d);
  std::copy(out.seed.begin(), out.seed.end(), sequence.row(0).begin());
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(memory.row(r).begin(), d, sequence.row(r + 1).begin());
  }
  AttentionOutput self = scaled_dot_attention(out.seed, sequence);
  out.self_output = std::move(self.output);
  out.self_weights = std::move(self.weights);

  AttentionOutput cross = scaled_dot_attention(out.self_output, memory);
  out.token = std::move(cross.output);
  out.cross_weights = std::move(cross.weights);

  out.joint = normalized(project(out.token, text_projection), "t_r_joint");
  return out;
}

DiscriminativeToken build_discriminative_token(const ModulatedTokens& tokens, const TextBundle& text) {
  return build_discriminative_token(tokens.attenuated, tokens.discriminative, text.text_projection);
}

CalibratedQuery calibrate_query(const TextBundle& text, TextThreshold strategy) {
  CalibratedQuery q;
  q.query_id = text.query_id;
  q.split = split_subspaces(aggregate_attention(text), strategy);
  q.tokens = modulate(text, q.split);
  q.disc = build_discriminative_token(q.tokens, text);
  q.eot_joint = to_double(text.eot_joint);
  return q;
}

nlohmann::json subspace_report(const TextBundle& text, const SubspaceSplit& split, double modulation) {
  nlohmann::json tokens = nlohmann::json::array();
  for (std::size_t i = 0; i < split.alpha.size(); ++i) {
    const bool general = split.alpha[i] >= split.tau_t;
    tokens.push_back({{"index", i},
                      {"token", i < text.token_strings.size() ? text.token_strings[i] : std::string()},
                      {"alpha", split.alpha[i]},
                      {"subspace", general ? "general" : "discriminative"}});
  }
  return {{"query_id", text.query_id},
          {"token_strings", text.token_strings},
          {"alpha", split.alpha},
          {"tau_t", split.tau_t},
          {"general", split.general},
          {"discriminative", split.discriminative},
          {"m", modulation},
          {"tokens", std::move(tokens)}};
}

}  // namespace tokencal
