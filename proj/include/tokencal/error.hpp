// Copyright 2026 The tokencal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tokencal {

enum class ErrorCode {
  // Bundle ingestion.
  kMissingTensor,
  kShapeMismatch,
  kNonFiniteValue,
  kManifestVersionUnsupported,
  kManifestInvalid,
  kNonPositiveNorm,
  kInvalidAttention,
  kAuditTensorsAbsent,
  // Numerical preconditions.
  kZeroVector,
  kGridMismatch,
  kDegenerateAttention,
  kEmptyQuery,
  kEmptyGallery,
  kDimensionMismatch,
  kDuplicateId,
  // Evaluation and configuration.
  kMissingRelevance,
  kInvalidConfig,
  // Filesystem.
  kIo,
};

std::string_view error_code_name(ErrorCode code);

/// Error raised by every tokencal module. `subject` names the tensor, id or
/// path the failure refers to (may be empty).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string subject, const std::string& detail);

  ErrorCode code() const noexcept { return code_; }
  const std::string& subject() const noexcept { return subject_; }

 private:
  ErrorCode code_;
  std::string subject_;
};

/// Process exit status for an error: 2 for I/O failures, 1 for everything else.
int exit_code_for(ErrorCode code);

}  // namespace tokencal
