// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0
//
// Reference evaluations written as plain scalar loops straight from the
// definitions, sharing no code with the production kernels beyond the tensor
// container. Masks are enumerated from source coordinates; attention skips
// masked keys outright instead of adding a large negative logit.

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "muster/attention.hpp"
#include "muster/tensor.hpp"
#include "muster/windowing.hpp"

namespace muster::oracle {

Tensor64 matmul(const Tensor64& a, const Tensor64& b);
/// Row softmax over the last axis, accumulated in long double.
Tensor64 softmax_rows(const Tensor64& x);
Tensor64 layer_norm(const Tensor64& x, const Tensor64& gamma, const Tensor64& beta, double eps);
Tensor64 conv1x1(const Tensor64& x, const Tensor64& w, const Tensor64& b);
Tensor64 depthwise_down2(const Tensor64& x, const Tensor64& w, const Tensor64& b);
Tensor64 pixel_shuffle(const Tensor64& x, std::int64_t r);

/// Pixel covered by token t of window (wi, wj).
std::pair<std::int64_t, std::int64_t> window_token_pixel(std::int64_t t, std::int64_t wi,
                                                         std::int64_t wj, std::int64_t window);

/// Mask of window (wi, wj) after a window/2 cyclic shift, [M^2, M^2]: two
/// tokens see each other iff their source pixels are within window-1 of each
/// other on both axes. Valid for grids of at least two windows per axis.
Tensor standard_window_mask(const WindowGrid& grid, std::int64_t wi, std::int64_t wj);
/// Light variant, [M^2, (M/2)^2]: keys are 2x2 source blocks on the
/// half-resolution grid shifted by window/4.
Tensor light_window_mask(const WindowGrid& grid, std::int64_t wi, std::int64_t wj);

struct MaskComparison {
  bool equal = true;
  int distinct = 0;  // distinct masks seen over the grid
  std::string detail;
};

/// Compares build_sw_mask / build_light_sw_mask against the enumeration above
/// for every window of the grid.
MaskComparison compare_masks(const WindowGrid& grid, MaskFamily family);

/// Skip attention on one window; f_win, m_win [M^2, C]. `mask` may be null.
Tensor64 mska(const Tensor64& f_win, const Tensor64& m_win, const MskaParams& p,
              const Tensor* mask);
/// Plain multi-head self-attention on x [M^2, C] with relative position bias.
Tensor64 msa(const Tensor64& x, const MskaParams& p);
/// Light attention on one window; x [M^2, C], keys [(M/2)^2, C].
Tensor64 light(const Tensor64& x, const Tensor64& keys, const LightAttnParams& p,
               const Tensor* mask);
/// Shifted-window skip attention on whole [H, W, C] maps with H, W multiples
/// of the window and at least two windows per axis.
Tensor64 sw_mska_map(const Tensor64& query, const Tensor64& kv, const MskaParams& p);

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

std::vector<SuiteResult> run_selftests();

}  // namespace muster::oracle
