// Copyright 2026 The tokencal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Feature bundles: pre-extracted vision-language features on disk.
//
// A bundle is a directory holding manifest.json plus one raw tensor file per
// tensor (row-major float32 little-endian, no header):
//
//   {"version": 1, "kind": "visual" | "text",
//    "id": "...",                      (optional, defaults to the dir name)
//    "provenance": "...",              (optional, free-form)
//    "grid": [h, w],                   (visual only)
//    "layers": L,                      (text only)
//    "dims": {"token": d, "joint": d_j},
//    "token_strings": ["..."],         (text only)
//    "tensors": {name: {"file": "...", "shape": [...], "dtype": "f32le"}}}
//
// Visual tensors: patch_tokens [N,d], cls_attention [N], cls_joint [d_j],
// visual_projection [d,d_j]; optional audit set q_cls [h], keys [N,h],
// values [N,h], cls_output [h].
// Text tensors: token_embeddings [n,d], eot_attention [L,n], eot_norms [L],
// eot_joint [d_j], text_projection [d,d_j].
//
// Bundles are immutable once loaded and safe to share between threads.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tokencal/linalg.hpp"

namespace tokencal {

inline constexpr int kManifestVersion = 1;

struct Grid {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const noexcept { return rows * cols; }
  friend bool operator==(const Grid&, const Grid&) = default;
};

/// Last-layer attention inputs an exporter may attach for auditing the
/// [CLS] aggregation. Never used by the calibration pipeline.
struct AuditTensors {
  std::vector<float> q_cls;     // [h]
  Matrix<float> keys;           // [N x h]
  Matrix<float> values;         // [N x h]
  std::vector<float> cls_output;  // [h]
};

struct VisualBundle {
  std::string image_id;
  std::string provenance;
  Grid grid;
  Matrix<float> patch_tokens;       // [N x d]
  std::vector<float> cls_attention;  // [N], head-averaged [CLS] -> patch
  std::vector<float> cls_joint;      // [d_j]
  Matrix<float> visual_projection;   // [d x d_j]
  std::optional<AuditTensors> audit;

  std::size_t num_patches() const noexcept { return patch_tokens.rows(); }
  std::size_t token_dim() const noexcept { return patch_tokens.cols(); }
  std::size_t joint_dim() const noexcept { return cls_joint.size(); }
};

struct TextBundle {
  std::string query_id;
  std::string provenance;
  Matrix<float> token_embeddings;  // [n x d_t], [EOT] row excluded
  std::vector<std::string> token_strings;
  Matrix<float> eot_attention;  // [L x n]
  std::vector<float> eot_norms;  // [L]
  std::vector<float> eot_joint;  // [d_j]
  Matrix<float> text_projection;  // [d_t x d_j]

  std::size_t num_tokens() const noexcept { return token_embeddings.rows(); }
  std::size_t num_layers() const noexcept { return eot_attention.rows(); }
  std::size_t token_dim() const noexcept { return token_embeddings.cols(); }
  std::size_t joint_dim() const noexcept { return eot_joint.size(); }
};

using Bundle = std::variant<VisualBundle, TextBundle>;

/// Loads and fully validates a bundle directory. Throws Error naming the
/// offending tensor (MissingTensor, ShapeMismatch, NonFiniteValue,
/// ManifestVersionUnsupported, NonPositiveNorm, InvalidAttention, ...).
Bundle load_bundle(const std::filesystem::path& dir);
VisualBundle load_visual_bundle(const std::filesystem::path& dir);
TextBundle load_text_bundle(const std::filesystem::path& dir);

/// Writes a bundle directory (created if needed). Validates first.
void write_bundle(const VisualBundle& bundle, const std::filesystem::path& dir);
void write_bundle(const TextBundle& bundle, const std::filesystem::path& dir);

void validate(const VisualBundle& bundle);
void validate(const TextBundle& bundle);

/// ‖softmax(q·Kᵀ/√h)·V − reference‖₂ where h = keys.cols().
double validate_cls_aggregation(std::span<const float> q_cls, const Matrix<float>& keys,
                                const Matrix<float>& values, std::span<const float> reference);

/// Audit against the bundle's own tensors; throws Error(kAuditTensorsAbsent)
/// when the exporter did not attach them.
double validate_cls_aggregation(const VisualBundle& bundle);

/// Raw little-endian float32 tensor file helpers.
std::vector<float> read_f32le(const std::filesystem::path& file);
void write_f32le(const std::filesystem::path& file, std::span<const float> values);

}  // namespace tokencal
