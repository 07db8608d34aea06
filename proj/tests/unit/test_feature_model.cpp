// Copyright 2026 The tokencal Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "builders.hpp"
#include "json.hpp"
#include "tokencal/error.hpp"
#include "tokencal/feature_model.hpp"

using namespace tokencal;
using testkit::TempDir;

namespace {

ErrorCode code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no tokencal::Error thrown";
  return ErrorCode::kIo;
}

nlohmann::json read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  return nlohmann::json::parse(in);
}

void write_manifest(const std::filesystem::path& dir, const nlohmann::json& m) {
  std::ofstream(dir / "manifest.json") << m.dump(2);
}

AuditTensors consistent_audit(std::size_t n, std::size_t h, std::mt19937_64& rng) {
  AuditTensors a;
  const auto q = testkit::random_matrix(1, h, rng);
  a.q_cls.assign(q.storage().begin(), q.storage().end());
  a.keys = testkit::random_matrix(n, h, rng);
  a.values = testkit::random_matrix(n, h, rng);
  const auto att = oracle::attention(testkit::vec(a.q_cls), testkit::mat(a.keys), testkit::mat(a.values));
  a.cls_output.assign(att.output.begin(), att.output.end());
  return a;
}

TEST(Bundle, VisualRoundTripIsExact) {
  TempDir tmp("fm");
  std::mt19937_64 rng(1);
  auto b = testkit::random_visual("img_a", {3, 4}, 16, 8, rng);
  b.provenance = "synthetic";
  write_bundle(b, tmp / "img_a");
  const auto loaded = load_visual_bundle(tmp / "img_a");
  EXPECT_EQ(loaded.image_id, "img_a");
  EXPECT_EQ(loaded.provenance, "synthetic");
  EXPECT_EQ(loaded.grid, b.grid);
  EXPECT_EQ(loaded.patch_tokens, b.patch_tokens);
  EXPECT_EQ(loaded.cls_attention, b.cls_attention);
  EXPECT_EQ(loaded.cls_joint, b.cls_joint);
  EXPECT_EQ(loaded.visual_projection, b.visual_projection);
  EXPECT_FALSE(loaded.audit.has_value());
}

TEST(Bundle, TextRoundTripIsExact) {
  TempDir tmp("fm");
  std::mt19937_64 rng(2);
  const auto t = testkit::random_text("q_a", 5, 12, 8, 3, rng);
  write_bundle(t, tmp / "q_a");
  const Bundle any = load_bundle(tmp / "q_a");
  ASSERT_TRUE(std::holds_alternative<TextBundle>(any));
  const auto& loaded = std::get<TextBundle>(any);
  EXPECT_EQ(loaded.token_embeddings, t.token_embeddings);
  EXPECT_EQ(loaded.token_strings, t.token_strings);
  EXPECT_EQ(loaded.eot_attention, t.eot_attention);
  EXPECT_EQ(loaded.eot_norms, t.eot_norms);
  EXPECT_EQ(loaded.eot_joint, t.eot_joint);
  EXPECT_EQ(loaded.text_projection, t.text_projection);
}

TEST(Bundle, IdDefaultsToDirectoryName) {
  TempDir tmp("fm");
  std::mt19937_64 rng(3);
  write_bundle(testkit::random_visual("original", {2, 2}, 4, 4, rng), tmp / "renamed");
  auto m = read_manifest(tmp / "renamed");
  m.erase("id");
  write_manifest(tmp / "renamed", m);
  EXPECT_EQ(load_visual_bundle(tmp / "renamed").image_id, "renamed");
}

TEST(Bundle, DeclaredShapeLargerThanFileIsShapeMismatch) {
  TempDir tmp("fm");
  std::mt19937_64 rng(4);
  write_bundle(testkit::random_visual("img", {2, 2}, 8, 4, rng), tmp / "img");
  ASSERT_EQ(read_manifest(tmp / "img")["tensors"]["patch_tokens"]["shape"], nlohmann::json({4, 8}));
  write_f32le(tmp / "img" / "patch_tokens.f32", std::vector<float>(24, 0.5f));
  EXPECT_EQ(code_of([&] { load_visual_bundle(tmp / "img"); }), ErrorCode::kShapeMismatch);
}

TEST(Bundle, MissingTensorIsNamed) {
  TempDir tmp("fm");
  std::mt19937_64 rng(5);
  write_bundle(testkit::random_visual("img", {2, 2}, 4, 4, rng), tmp / "img");
  std::filesystem::remove(tmp / "img" / "cls_attention.f32");
  try {
    load_visual_bundle(tmp / "img");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingTensor);
    EXPECT_EQ(e.subject(), "cls_attention");
  }
}

TEST(Bundle, UnsupportedVersion) {
  TempDir tmp("fm");
  std::mt19937_64 rng(6);
  write_bundle(testkit::random_visual("img", {2, 2}, 4, 4, rng), tmp / "img");
  auto m = read_manifest(tmp / "img");
  m["version"] = 2;
  write_manifest(tmp / "img", m);
  EXPECT_EQ(code_of([&] { load_bundle(tmp / "img"); }), ErrorCode::kManifestVersionUnsupported);
}

TEST(Bundle, UnknownDtypeIsManifestInvalid) {
  TempDir tmp("fm");
  std::mt19937_64 rng(7);
  write_bundle(testkit::random_visual("img", {2, 2}, 4, 4, rng), tmp / "img");
  auto m = read_manifest(tmp / "img");
  m["tensors"]["cls_joint"]["dtype"] = "f16";
  write_manifest(tmp / "img", m);
  EXPECT_EQ(code_of([&] { load_bundle(tmp / "img"); }), ErrorCode::kManifestInvalid);
}

TEST(Bundle, MissingDirectoryIsIo) {
  EXPECT_EQ(code_of([] { load_bundle("/nonexistent/tokencal/bundle"); }), ErrorCode::kIo);
  EXPECT_EQ(exit_code_for(ErrorCode::kIo), 2);
  EXPECT_EQ(exit_code_for(ErrorCode::kShapeMismatch), 1);
}

TEST(Validate, ZeroEotNormIsNonPositiveNorm) {
  std::mt19937_64 rng(8);
  auto t = testkit::random_text("q", 4, 6, 4, 3, rng);
  t.eot_norms[1] = 0.0f;
  EXPECT_EQ(code_of([&] { validate(t); }), ErrorCode::kNonPositiveNorm);
}

TEST(Validate, NonFiniteValuesAreRejected) {
  std::mt19937_64 rng(9);
  auto b = testkit::random_visual("img", {2, 2}, 4, 4, rng);
  b.patch_tokens(1, 2) = std::numeric_limits<float>::quiet_NaN();
  EXPECT_EQ(code_of([&] { validate(b); }), ErrorCode::kNonFiniteValue);
  auto t = testkit::random_text("q", 4, 6, 4, 3, rng);
  t.eot_joint[0] = std::numeric_limits<float>::infinity();
  EXPECT_EQ(code_of([&] { validate(t); }), ErrorCode::kNonFiniteValue);
}

TEST(Validate, AttentionMustBeADistribution) {
  std::mt19937_64 rng(10);
  auto b = testkit::random_visual("img", {2, 2}, 4, 4, rng);
  b.cls_attention[0] += 0.1f;
  EXPECT_EQ(code_of([&] { validate(b); }), ErrorCode::kInvalidAttention);
  b.cls_attention = {0.5f, 0.5f, 0.5f, -0.5f};
  EXPECT_EQ(code_of([&] { validate(b); }), ErrorCode::kInvalidAttention);
}

TEST(Validate, GridMustCoverPatches) {
  std::mt19937_64 rng(11);
  auto b = testkit::random_visual("img", {2, 3}, 4, 4, rng);
  b.grid = {2, 2};
  EXPECT_EQ(code_of([&] { validate(b); }), ErrorCode::kGridMismatch);
}

TEST(Validate, EmptyQueryIsRejected) {
  std::mt19937_64 rng(12);
  auto t = testkit::random_text("q", 3, 6, 4, 2, rng);
  t.token_embeddings = Matrix<float>(0, 6);
  t.token_strings.clear();
  t.eot_attention = Matrix<float>(2, 0);
  EXPECT_EQ(code_of([&] { validate(t); }), ErrorCode::kEmptyQuery);
}

TEST(Audit, SingleTokenReproducesItsValueExactly) {
  Matrix<float> keys(1, 3, {0.3f, -1.0f, 2.0f});
  Matrix<float> values(1, 3, {1.5f, 0.25f, -4.0f});
  const std::vector<float> q{0.7f, 0.1f, -0.2f};
  const std::vector<float> ref{1.5f, 0.25f, -4.0f};
  EXPECT_EQ(validate_cls_aggregation(q, keys, values, ref), 0.0);
}

TEST(Audit, ConsistentBundlePassesAndPerturbationIsDetected) {
  std::mt19937_64 rng(13);
  auto b = testkit::random_visual("img", {3, 3}, 6, 4, rng);
  b.audit = consistent_audit(9, 5, rng);
  EXPECT_LT(validate_cls_aggregation(b), 1e-5);

  auto perturbed = b;
  for (float& v : perturbed.audit->values.flat()) v += 1.0f;
  EXPECT_GT(validate_cls_aggregation(perturbed), 0.5);
}

TEST(Audit, AbsentTensorsAreReported) {
  std::mt19937_64 rng(14);
  const auto b = testkit::random_visual("img", {2, 2}, 4, 4, rng);
  EXPECT_EQ(code_of([&] { validate_cls_aggregation(b); }), ErrorCode::kAuditTensorsAbsent);
}

TEST(Audit, RoundTripsThroughDisk) {
  TempDir tmp("fm");
  std::mt19937_64 rng(15);
  auto b = testkit::random_visual("img", {2, 3}, 4, 4, rng);
  b.audit = consistent_audit(6, 3, rng);
  write_bundle(b, tmp / "img");
  const auto loaded = load_visual_bundle(tmp / "img");
  ASSERT_TRUE(loaded.audit.has_value());
  EXPECT_EQ(loaded.audit->keys, b.audit->keys);
  EXPECT_EQ(validate_cls_aggregation(loaded), validate_cls_aggregation(b));
}

TEST(F32File, LittleEndianLayout) {
  TempDir tmp("fm");
  write_f32le(tmp / "x.f32", std::vector<float>{1.0f});
  std::ifstream in(tmp / "x.f32", std::ios::binary);
  unsigned char bytes[4] = {};
  in.read(reinterpret_cast<char*>(bytes), 4);
  EXPECT_EQ(bytes[0], 0x00);
  EXPECT_EQ(bytes[1], 0x00);
  EXPECT_EQ(bytes[2], 0x80);
  EXPECT_EQ(bytes[3], 0x3f);
  EXPECT_EQ(read_f32le(tmp / "x.f32"), std::vector<float>{1.0f});
}

}  // namespace
