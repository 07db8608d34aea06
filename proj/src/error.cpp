// Copyright 2026 The tokencal Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokencal/error.hpp"

namespace tokencal {

namespace {

std::string format_message(ErrorCode code, const std::string& subject, const std::string& detail) {
  std::string msg(error_code_name(code));
  if (!subject.empty()) {
    msg += " [" + subject + "]";
  }
  if (!detail.empty()) {
    msg += ": " + detail;
  }
  return msg;
}

}  // namespace

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingTensor: return "MissingTensor";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNonFiniteValue: return "NonFiniteValue";
    case ErrorCode::kManifestVersionUnsupported: return "ManifestVersionUnsupported";
    case ErrorCode::kManifestInvalid: return "ManifestInvalid";
    case ErrorCode::kNonPositiveNorm: return "NonPositiveNorm";
    case ErrorCode::kInvalidAttention: return "InvalidAttention";
    case ErrorCode::kAuditTensorsAbsent: return "AuditTensorsAbsent";
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kGridMismatch: return "GridMismatch";
    case ErrorCode::kDegenerateAttention: return "DegenerateAttention";
    case ErrorCode::kEmptyQuery: return "EmptyQuery";
    case ErrorCode::kEmptyGallery: return "EmptyGallery";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kDuplicateId: return "DuplicateId";
    case ErrorCode::kMissingRelevance: return "MissingRelevance";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kIo: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, std::string subject, const std::string& detail)
    : std::runtime_error(format_message(code, subject, detail)), code_(code), subject_(std::move(subject)) {}

int exit_code_for(ErrorCode code) { return code == ErrorCode::kIo ? 2 : 1; }

}  // namespace tokencal
