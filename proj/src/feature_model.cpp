// Copyright 2026 The tokencal Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokencal/feature_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string_view>

#include "json.hpp"
#include "tokencal/error.hpp"
#include "tokencal/kernels.hpp"

namespace tokencal {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kAttentionSumTolerance = 1e-5;
constexpr const char* kDtype = "f32le";

std::uint32_t byteswap32(std::uint32_t v) {
  return ((v & 0x000000FFu) << 24) | ((v & 0x0000FF00u) << 8) | ((v & 0x00FF0000u) >> 8) |
         ((v & 0xFF000000u) >> 24);
}

// --- validation helpers ----------------------------------------------------

void require_finite(std::span<const float> values, const char* name) {
  for (float v : values) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kNonFiniteValue, name, "tensor contains NaN or Inf");
    }
  }
}

void require_shape(const Matrix<float>& m, std::size_t rows, std::size_t cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols || m.flat().size() != rows * cols) {
    throw Error(ErrorCode::kShapeMismatch, name,
                "expected [" + std::to_string(rows) + "," + std::to_string(cols) + "], got [" +
                    std::to_string(m.rows()) + "," + std::to_string(m.cols()) + "]");
  }
}

void require_length(std::span<const float> v, std::size_t n, const char* name) {
  if (v.size() != n) {
    throw Error(ErrorCode::kShapeMismatch, name,
                "expected [" + std::to_string(n) + "], got [" + std::to_string(v.size()) + "]");
  }
}

// --- manifest helpers --------------------------------------------------------

json read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kIo, path.string(), "cannot open manifest");
  }
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kManifestInvalid, path.string(), e.what());
  }
  if (!manifest.is_object()) {
    throw Error(ErrorCode::kManifestInvalid, path.string(), "manifest is not a JSON object");
  }
  if (!manifest.contains("version") || !manifest["version"].is_number_integer()) {
    throw Error(ErrorCode::kManifestInvalid, "version", "missing integer version");
  }
  const int version = manifest["version"].get<int>();
  if (version != kManifestVersion) {
    throw Error(ErrorCode::kManifestVersionUnsupported, "version",
                "version " + std::to_string(version) + " (supported: 1)");
  }
  return manifest;
}

template <typename T>
T field(const json& obj, const char* key) {
  if (!obj.contains(key)) {
    throw Error(ErrorCode::kManifestInvalid, key, "missing manifest field");
  }
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kManifestInvalid, key, e.what());
  }
}

std::string bundle_id(const json& manifest, const fs::path& dir) {
  if (manifest.contains("id")) {
    return field<std::string>(manifest, "id");
  }
  fs::path p = dir;
  if (!p.has_filename()) {
    p = p.parent_path();
  }
  return p.filename().string();
}

struct TensorRecord {
  std::vector<std::size_t> shape;
  std::vector<float> data;
};

bool has_tensor(const json& manifest, const char* name) {
  return manifest.contains("tensors") && manifest["tensors"].is_object() && manifest["tensors"].contains(name);
}

TensorRecord read_tensor(const json& manifest, const fs::path& dir, const char* name) {
  if (!has_tensor(manifest, name)) {
    throw Error(ErrorCode::kMissingTensor, name, "required tensor not declared in manifest");
  }
  const json& entry = manifest["tensors"][name];
  if (!entry.is_object()) {
    throw Error(ErrorCode::kManifestInvalid, name, "tensor entry is not an object");
  }
  const auto file = field<std::string>(entry, "file");
  const auto dtype = field<std::string>(entry, "dtype");
  if (dtype != kDtype) {
    throw Error(ErrorCode::kManifestInvalid, name, "unsupported dtype '" + dtype + "' (only f32le)");
  }
  TensorRecord rec;
  rec.shape = field<std::vector<std::size_t>>(entry, "shape");
  const fs::path path = dir / file;
  if (!fs::exists(path)) {
    throw Error(ErrorCode::kMissingTensor, name, "tensor file not found: " + path.string());
  }
  rec.data = read_f32le(path);
  std::size_t expected = 1;
  for (std::size_t s : rec.shape) {
    expected *= s;
  }
  if (rec.data.size() != expected) {
    throw Error(ErrorCode::kShapeMismatch, name,
                "manifest shape holds " + std::to_string(expected) + " floats, file holds " +
                    std::to_string(rec.data.size()));
  }
  return rec;
}

std::vector<float> read_vector(const json& manifest, const fs::path& dir, const char* name, std::size_t n) {
  TensorRecord rec = read_tensor(manifest, dir, name);
  if (rec.shape.size() != 1 || rec.shape[0] != n) {
    throw Error(ErrorCode::kShapeMismatch, name, "expected shape [" + std::to_string(n) + "]");
  }
  return std::move(rec.data);
}

Matrix<float> read_matrix(const json& manifest, const fs::path& dir, const char* name, std::size_t rows,
                          std::size_t cols) {
  TensorRecord rec = read_tensor(manifest, dir, name);
  if (rec.shape.size() != 2 || rec.shape[0] != rows || rec.shape[1] != cols) {
    throw Error(ErrorCode::kShapeMismatch, name,
                "expected shape [" + std::to_string(rows) + "," + std::to_string(cols) + "]");
  }
  return Matrix<float>(rows, cols, std::move(rec.data));
}

// Matrix whose column count is not fixed by the manifest dims (audit tensors).
Matrix<float> read_matrix_rows(const json& manifest, const fs::path& dir, const char* name, std::size_t rows) {
  TensorRecord rec = read_tensor(manifest, dir, name);
  if (rec.shape.size() != 2 || rec.shape[0] != rows) {
    throw Error(ErrorCode::kShapeMismatch, name, "expected shape [" + std::to_string(rows) + ",h]");
  }
  return Matrix<float>(rec.shape[0], rec.shape[1], std::move(rec.data));
}

json tensor_entry(const std::string& name, std::vector<std::size_t> shape) {
  return json{{"file", name + ".f32"}, {"shape", std::move(shape)}, {"dtype", kDtype}};
}

void write_manifest(const fs::path& dir, const json& manifest) {
  const fs::path path = dir / "manifest.json";
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorCode::kIo, path.string(), "cannot write manifest");
  }
  out << manifest.dump(2) << '\n';
  if (!out) {
    throw Error(ErrorCode::kIo, path.string(), "write failed");
  }
}

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw Error(ErrorCode::kIo, dir.string(), ec.message());
  }
}

}  // namespace

// --- raw tensor files ----------------------------------------------------------

std::vector<float> read_f32le(const fs::path& file) {
  std::ifstream in(file, std::ios::binary | std::ios::ate);
  if (!in) {
    throw Error(ErrorCode::kIo, file.string(), "cannot open tensor file");
  }
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes % sizeof(float) != 0) {
    throw Error(ErrorCode::kShapeMismatch, file.filename().string(), "file size is not a multiple of 4 bytes");
  }
  in.seekg(0);
  std::vector<float> out(bytes / sizeof(float));
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(bytes));
  if (!in) {
    throw Error(ErrorCode::kIo, file.string(), "short read");
  }
  if constexpr (std::endian::native == std::endian::big) {
    for (float& f : out) {
      f = std::bit_cast<float>(byteswap32(std::bit_cast<std::uint32_t>(f)));
    }
  }
  return out;
}

void write_f32le(const fs::path& file, std::span<const float> values) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::kIo, file.string(), "cannot create tensor file");
  }
  if constexpr (std::endian::native == std::endian::big) {
    for (float f : values) {
      const std::uint32_t le = byteswap32(std::bit_cast<std::uint32_t>(f));
      out.write(reinterpret_cast<const char*>(&le), sizeof(le));
    }
  } else {
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  }
  if (!out) {
    throw Error(ErrorCode::kIo, file.string(), "write failed");
  }
}

// --- validation -----------------------------------------------------------------

void validate(const VisualBundle& b) {
  const std::size_t n = b.num_patches();
  const std::size_t d = b.token_dim();
  const std::size_t dj = b.joint_dim();
  if (b.grid.rows == 0 || b.grid.cols == 0 || b.grid.size() != n) {
    throw Error(ErrorCode::kGridMismatch, "grid",
                "grid " + std::to_string(b.grid.rows) + "x" + std::to_string(b.grid.cols) + " does not cover " +
                    std::to_string(n) + " patches");
  }
  if (d == 0) {
    throw Error(ErrorCode::kShapeMismatch, "patch_tokens", "token dimension is zero");
  }
  if (dj == 0) {
    throw Error(ErrorCode::kShapeMismatch, "cls_joint", "joint dimension is zero");
  }
  require_shape(b.patch_tokens, n, d, "patch_tokens");
  require_length(b.cls_attention, n, "cls_attention");
  require_shape(b.visual_projection, d, dj, "visual_projection");

  require_finite(b.patch_tokens.flat(), "patch_tokens");
  require_finite(b.cls_attention, "cls_attention");
  require_finite(b.cls_joint, "cls_joint");
  require_finite(b.visual_projection.flat(), "visual_projection");

  double sum = 0.0;
  for (float a : b.cls_attention) {
    if (a < 0.0F) {
      throw Error(ErrorCode::kInvalidAttention, "cls_attention", "negative attention weight");
    }
    sum += a;
  }
  if (std::abs(sum - 1.0) > kAttentionSumTolerance) {
    throw Error(ErrorCode::kInvalidAttention, "cls_attention", "weights sum to " + std::to_string(sum));
  }

  if (b.audit) {
    const AuditTensors& a = *b.audit;
    const std::size_t h = a.q_cls.size();
    if (h == 0) {
      throw Error(ErrorCode::kShapeMismatch, "q_cls", "empty audit query");
    }
    require_shape(a.keys, n, h, "keys");
    require_shape(a.values, n, h, "values");
    require_length(a.cls_output, h, "cls_output");
    require_finite(a.q_cls, "q_cls");
    require_finite(a.keys.flat(), "keys");
    require_finite(a.values.flat(), "values");
    require_finite(a.cls_output, "cls_output");
  }
}

void validate(const TextBundle& b) {
  const std::size_t n = b.num_tokens();
  const std::size_t layers = b.num_layers();
  const std::size_t d = b.token_dim();
  const std::size_t dj = b.joint_dim();
  if (n == 0) {
    throw Error(ErrorCode::kEmptyQuery, "token_embeddings", "query has no subword tokens");
  }
  if (layers == 0) {
    throw Error(ErrorCode::kShapeMismatch, "eot_attention", "at least one layer required");
  }
  if (d == 0) {
    throw Error(ErrorCode::kShapeMismatch, "token_embeddings", "token dimension is zero");
  }
  if (dj == 0) {
    throw Error(ErrorCode::kShapeMismatch, "eot_joint", "joint dimension is zero");
  }
  require_shape(b.eot_attention, layers, n, "eot_attention");
  require_length(b.eot_norms, layers, "eot_norms");
  require_shape(b.text_projection, d, dj, "text_projection");
  if (b.token_strings.size() != n) {
    throw Error(ErrorCode::kShapeMismatch, "token_strings",
                "expected " + std::to_string(n) + " strings, got " + std::to_string(b.token_strings.size()));
  }

  require_finite(b.token_embeddings.flat(), "token_embeddings");
  require_finite(b.eot_attention.flat(), "eot_attention");
  require_finite(b.eot_norms, "eot_norms");
  require_finite(b.eot_joint, "eot_joint");
  require_finite(b.text_projection.flat(), "text_projection");

  for (float a : b.eot_attention.flat()) {
    if (a < 0.0F || a > 1.0F) {
      throw Error(ErrorCode::kInvalidAttention, "eot_attention", "entry outside [0, 1]");
    }
  }
  for (float g : b.eot_norms) {
    if (!(g > 0.0F)) {
      throw Error(ErrorCode::kNonPositiveNorm, "eot_norms", "layer norm must be > 0");
    }
  }
}

// --- loading ----------------------------------------------------------------------

VisualBundle load_visual_bundle(const fs::path& dir) {
  const json manifest = read_manifest(dir);
  if (field<std::string>(manifest, "kind") != "visual") {
    throw Error(ErrorCode::kManifestInvalid, "kind", "expected a visual bundle");
  }
  const auto grid = field<std::vector<std::size_t>>(manifest, "grid");
  if (grid.size() != 2) {
    throw Error(ErrorCode::kManifestInvalid, "grid", "grid must be [h, w]");
  }
  const json dims = field<json>(manifest, "dims");
  const auto d = field<std::size_t>(dims, "token");
  const auto dj = field<std::size_t>(dims, "joint");
  const std::size_t n = grid[0] * grid[1];

  VisualBundle b;
  b.image_id = bundle_id(manifest, dir);
  if (manifest.contains("provenance")) {
    b.provenance = field<std::string>(manifest, "provenance");
  }
  b.grid = Grid{grid[0], grid[1]};
  b.patch_tokens = read_matrix(manifest, dir, "patch_tokens", n, d);
  b.cls_attention = read_vector(manifest, dir, "cls_attention", n);
  b.cls_joint = read_vector(manifest, dir, "cls_joint", dj);
  b.visual_projection = read_matrix(manifest, dir, "visual_projection", d, dj);

  const bool any_audit = has_tensor(manifest, "q_cls") || has_tensor(manifest, "keys") ||
                         has_tensor(manifest, "values") || has_tensor(manifest, "cls_output");
  if (any_audit) {
    // The audit set is all-or-nothing; a partial set names the first gap.
    AuditTensors a;
    TensorRecord q = read_tensor(manifest, dir, "q_cls");
    if (q.shape.size() != 1) {
      throw Error(ErrorCode::kShapeMismatch, "q_cls", "expected a vector");
    }
    a.q_cls = std::move(q.data);
    a.keys = read_matrix_rows(manifest, dir, "keys", n);
    a.values = read_matrix_rows(manifest, dir, "values", n);
    a.cls_output = read_vector(manifest, dir, "cls_output", a.values.cols());
    b.audit = std::move(a);
  }
  validate(b);
  return b;
}

TextBundle load_text_bundle(const fs::path& dir) {
  const json manifest = read_manifest(dir);
  if (field<std::string>(manifest, "kind") != "text") {
    throw Error(ErrorCode::kManifestInvalid, "kind", "expected a text bundle");
  }
  const auto layers = field<std::size_t>(manifest, "layers");
  const json dims = field<json>(manifest, "dims");
  const auto d = field<std::size_t>(dims, "token");
  const auto dj = field<std::size_t>(dims, "joint");
  auto strings = field<std::vector<std::string>>(manifest, "token_strings");

  TextBundle b;
  b.query_id = bundle_id(manifest, dir);
  if (manifest.contains("provenance")) {
    b.provenance = field<std::string>(manifest, "provenance");
  }
  // n is fixed by token_embeddings; everything else must agree with it.
  TensorRecord tokens = read_tensor(manifest, dir, "token_embeddings");
  if (tokens.shape.size() != 2 || tokens.shape[1] != d) {
    throw Error(ErrorCode::kShapeMismatch, "token_embeddings", "expected shape [n," + std::to_string(d) + "]");
  }
  const std::size_t n = tokens.shape[0];
  b.token_embeddings = Matrix<float>(n, d, std::move(tokens.data));
  b.token_strings = std::move(strings);
  b.eot_attention = read_matrix(manifest, dir, "eot_attention", layers, n);
  b.eot_norms = read_vector(manifest, dir, "eot_norms", layers);
  b.eot_joint = read_vector(manifest, dir, "eot_joint", dj);
  b.text_projection = read_matrix(manifest, dir, "text_projection", d, dj);
  validate(b);
  return b;
}

Bundle load_bundle(const fs::path& dir) {
  const json manifest = read_manifest(dir);
  const auto kind = field<std::string>(manifest, "kind");
  if (kind == "visual") {
    return load_visual_bundle(dir);
  }
  if (kind == "text") {
    return load_text_bundle(dir);
  }
  throw Error(ErrorCode::kManifestInvalid, "kind", "unknown bundle kind '" + kind + "'");
}

// --- writing ------------------------------------------------------------------------

void write_bundle(const VisualBundle& b, const fs::path& dir) {
  validate(b);
  prepare_dir(dir);
  const std::size_t n = b.num_patches();
  json tensors = json::object();
  tensors["patch_tokens"] = tensor_entry("patch_tokens", {n, b.token_dim()});
  tensors["cls_attention"] = tensor_entry("cls_attention", {n});
  tensors["cls_joint"] = tensor_entry("cls_joint", {b.joint_dim()});
  tensors["visual_projection"] = tensor_entry("visual_projection", {b.token_dim(), b.joint_dim()});
  write_f32le(dir / "patch_tokens.f32", b.patch_tokens.flat());
  write_f32le(dir / "cls_attention.f32", b.cls_attention);
  write_f32le(dir / "cls_joint.f32", b.cls_joint);
  write_f32le(dir / "visual_projection.f32", b.visual_projection.flat());
  if (b.audit) {
    const AuditTensors& a = *b.audit;
    tensors["q_cls"] = tensor_entry("q_cls", {a.q_cls.size()});
    tensors["keys"] = tensor_entry("keys", {a.keys.rows(), a.keys.cols()});
    tensors["values"] = tensor_entry("values", {a.values.rows(), a.values.cols()});
    tensors["cls_output"] = tensor_entry("cls_output", {a.cls_output.size()});
    write_f32le(dir / "q_cls.f32", a.q_cls);
    write_f32le(dir / "keys.f32", a.keys.flat());
    write_f32le(dir / "values.f32", a.values.flat());
    write_f32le(dir / "cls_output.f32", a.cls_output);
  }
  json manifest{{"version", kManifestVersion},
                {"kind", "visual"},
                {"id", b.image_id},
                {"grid", {b.grid.rows, b.grid.cols}},
                {"dims", {{"token", b.token_dim()}, {"joint", b.joint_dim()}}},
                {"tensors", tensors}};
  if (!b.provenance.empty()) {
    manifest["provenance"] = b.provenance;
  }
  write_manifest(dir, manifest);
}

void write_bundle(const TextBundle& b, const fs::path& dir) {
  validate(b);
  prepare_dir(dir);
  json tensors = json::object();
  tensors["token_embeddings"] = tensor_entry("token_embeddings", {b.num_tokens(), b.token_dim()});
  tensors["eot_attention"] = tensor_entry("eot_attention", {b.num_layers(), b.num_tokens()});
  tensors["eot_norms"] = tensor_entry("eot_norms", {b.num_layers()});
  tensors["eot_joint"] = tensor_entry("eot_joint", {b.joint_dim()});
  tensors["text_projection"] = tensor_entry("text_projection", {b.token_dim(), b.joint_dim()});
  write_f32le(dir / "token_embeddings.f32", b.token_embeddings.flat());
  write_f32le(dir / "eot_attention.f32", b.eot_attention.flat());
  write_f32le(dir / "eot_norms.f32", b.eot_norms);
  write_f32le(dir / "eot_joint.f32", b.eot_joint);
  write_f32le(dir / "text_projection.f32", b.text_projection.flat());
  json manifest{{"version", kManifestVersion},
                {"kind", "text"},
                {"id", b.query_id},
                {"layers", b.num_layers()},
                {"dims", {{"token", b.token_dim()}, {"joint", b.joint_dim()}}},
                {"token_strings", b.token_strings},
                {"tensors", tensors}};
  if (!b.provenance.empty()) {
    manifest["provenance"] = b.provenance;
  }
  write_manifest(dir, manifest);
}

// --- [CLS] aggregation audit ----------------------------------------------------

double validate_cls_aggregation(std::span<const float> q_cls, const Matrix<float>& keys,
                                const Matrix<float>& values, std::span<const float> reference) {
  const std::size_t n = keys.rows();
  const std::size_t h = keys.cols();
  if (n == 0 || h == 0 || q_cls.size() != h || values.rows() != n || values.cols() != reference.size()) {
    throw Error(ErrorCode::kShapeMismatch, "audit", "q_cls/keys/values/cls_output shapes disagree");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(h));
  std::vector<double> logits(n);
  for (std::size_t i = 0; i < n; ++i) {
    logits[i] = kernels::dot(q_cls, keys.row(i)) * scale;
  }
  const double peak = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double& l : logits) {
    l = std::exp(l - peak);
    z += l;
  }
  std::vector<double> out(values.cols(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    kernels::axpy(logits[i] / z, values.row(i), out);
  }
  double sq = 0.0;
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double diff = out[k] - static_cast<double>(reference[k]);
    sq += diff * diff;
  }
  return std::sqrt(sq);
}

double validate_cls_aggregation(const VisualBundle& bundle) {
  if (!bundle.audit) {
    throw Error(ErrorCode::kAuditTensorsAbsent, bundle.image_id, "bundle carries no q_cls/keys/values/cls_output");
  }
  const AuditTensors& a = *bundle.audit;
  return validate_cls_aggregation(a.q_cls, a.keys, a.values, a.cls_output);
}

}  // namespace tokencal
