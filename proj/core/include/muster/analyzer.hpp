// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0
//
// Exact operation counts for the decoder as it is actually evaluated:
// attention projections and window matmuls run on the window-padded token
// grid, everything else on the unpadded grid. Multiply-accumulates are what
// the instrumented kernels execute; cheap elementwise work (norms, softmax,
// GELU, bias/residual adds, bilinear taps) is charged fixed FLOPs per element
// and kept apart from the MAC totals.
//
// h and w are the finest patch grid (image extent / 4).

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "muster/decoder.hpp"

namespace muster {

inline constexpr std::uint64_t kLayerNormFlops = 8;  // per element
inline constexpr std::uint64_t kSoftmaxFlops = 5;    // per logit
inline constexpr std::uint64_t kGeluFlops = 8;       // per element
inline constexpr std::uint64_t kBilinearFlops = 7;   // per output element
inline constexpr std::uint64_t kAddFlops = 1;        // per element

struct FlopEntry {
  std::string op;
  std::int64_t stage = 0;  // stage_count() for the classifier
  std::uint64_t macs = 0;
  std::uint64_t elementwise_flops = 0;
  std::uint64_t params = 0;
  bool attention_term = false;  // token-token matmuls (scores, weighted values)
};

struct FlopReport {
  std::int64_t h = 0, w = 0;
  Variant variant = Variant::kMuster;
  std::vector<FlopEntry> entries;
  std::vector<std::uint64_t> stage_macs;   // one per stage, classifier last
  std::vector<std::uint64_t> stage_flops;  // 2 * macs + elementwise
  std::uint64_t total_macs = 0;
  std::uint64_t total_elementwise_flops = 0;
  std::uint64_t total_params = 0;
  std::uint64_t attention_macs = 0;   // the M^2 hw C family
  std::uint64_t projection_macs = 0;  // everything else (the hw C^2 family)

  std::uint64_t total_flops() const { return 2 * total_macs + total_elementwise_flops; }
};

FlopReport count_model(const DecoderConfig& cfg, std::int64_t h, std::int64_t w);

/// Q K^T multiply-accumulates for one window over all heads.
std::uint64_t attention_score_macs_per_window(std::int64_t window, std::int64_t channels,
                                              Variant variant);

struct ComplexityFit {
  double slope = 0.0;      // FLOPs per patch
  double intercept = 0.0;
  double max_rel_residual = 0.0;
  std::vector<std::pair<double, double>> points;  // (h*w, total FLOPs)
};

/// Least-squares fit of total FLOPs to slope * (h*w) + intercept. Needs at
/// least three sizes with at least two distinct areas.
ComplexityFit verify_complexity_law(const DecoderConfig& cfg,
                                    const std::vector<std::pair<std::int64_t, std::int64_t>>& sizes);

/// 100 * (1 - light / muster) on total FLOPs for cfg at the given grid.
double light_reduction_percent(DecoderConfig cfg, std::int64_t h, std::int64_t w);

}  // namespace muster
