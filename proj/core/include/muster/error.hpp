// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace muster {

enum class ErrorCode {
  kShape,
  kChannelDivisibility,
  kParity,
  kRank,
  kFullyMaskedRow,
  kConfig,
  kUnsupportedShift,
  kMaskConsistency,
  kPartition,
  kWiring,
  kValidation,
  kMissingAdjoint,
  kEvaluation,
  kDegenerateInput,
  kIo,
  kBadMagic,
  kBadVersion,
  kBadDtype,
  kBadHeader,
  kTruncated,
  kSchema,
  kUsage,
};

/// Stable snake_case identifier, used for the CLI's machine-readable errors.
std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace muster
