// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0

#include "muster/error.hpp"

namespace muster {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kShape: return "shape";
    case ErrorCode::kChannelDivisibility: return "channel_divisibility";
    case ErrorCode::kParity: return "parity";
    case ErrorCode::kRank: return "rank";
    case ErrorCode::kFullyMaskedRow: return "fully_masked_row";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kUnsupportedShift: return "unsupported_shift";
    case ErrorCode::kMaskConsistency: return "mask_consistency";
    case ErrorCode::kPartition: return "partition";
    case ErrorCode::kWiring: return "wiring";
    case ErrorCode::kValidation: return "validation";
    case ErrorCode::kMissingAdjoint: return "missing_adjoint";
    case ErrorCode::kEvaluation: return "evaluation";
    case ErrorCode::kDegenerateInput: return "degenerate_input";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kBadMagic: return "bad_magic";
    case ErrorCode::kBadVersion: return "bad_version";
    case ErrorCode::kBadDtype: return "bad_dtype";
    case ErrorCode::kBadHeader: return "bad_header";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kSchema: return "schema";
    case ErrorCode::kUsage: return "usage";
  }
  return "unknown";
}

}  // namespace muster
