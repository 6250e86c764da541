// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0
//
// Window partitioning, cyclic shifts, and the two shifted-window mask
// families: the standard M^2 x M^2 masks and the light-attention
// M^2 x (M/2)^2 masks whose keys live on a 2x downsampled grid.

#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <unordered_map>
#include <vector>

#include "muster/tensor.hpp"

namespace muster {

/// Additive logit used for masked pairs inside differentiable paths. Masks
/// themselves store exact -inf.
inline constexpr double kMaskedLogit = -1e9;

struct WindowGrid {
  std::int64_t height = 0;  // tokens, after padding
  std::int64_t width = 0;
  std::int64_t window = 12;
  std::int64_t shift = 0;  // 0 or window / 2

  std::int64_t rows() const { return height / window; }
  std::int64_t cols() const { return width / window; }
  std::int64_t count() const { return rows() * cols(); }

  /// Throws kPartition / kConfig if the grid violates its invariants.
  void validate() const;
};

/// Smallest multiple of `window` that is >= extent.
std::int64_t padded_extent(std::int64_t extent, std::int64_t window);

template <typename T>
BasicTensor<T> pad_hw(const BasicTensor<T>& x, std::int64_t height, std::int64_t width);
template <typename T>
BasicTensor<T> crop_hw(const BasicTensor<T>& x, std::int64_t height, std::int64_t width);

/// [H,W,C] -> [nH*nW, M*M, C], windows row-major, tokens row-major inside.
template <typename T>
BasicTensor<T> window_partition(const BasicTensor<T>& x, std::int64_t window);
/// Exact inverse of window_partition.
template <typename T>
BasicTensor<T> window_reverse(const BasicTensor<T>& windows, std::int64_t window,
                              std::int64_t height, std::int64_t width);

/// out[i,j] = x[(i+s) mod H, (j+s) mod W]. Negative s shifts the other way,
/// so cyclic_shift(cyclic_shift(x, s), -s) == x.
template <typename T>
BasicTensor<T> cyclic_shift(const BasicTensor<T>& x, std::int64_t s);

struct AttentionMask {
  Tensor matrix;  // [query_tokens, key_tokens], entries 0 or -inf
};

enum class MaskFamily { kStandard, kLight };

/// Window -> mask id. Ids: 0 interior, 1 right edge, 2 bottom edge, 3 corner.
class MaskAssignment {
 public:
  MaskAssignment(std::int64_t rows, std::int64_t cols);

  int id(std::int64_t wi, std::int64_t wj) const;
  /// One id per window, row-major.
  std::vector<int> ids() const;
  std::int64_t rows() const { return rows_; }
  std::int64_t cols() const { return cols_; }

 private:
  std::int64_t rows_;
  std::int64_t cols_;
  // Keyed on (last_row << 1) | last_col.
  std::unordered_map<std::uint8_t, int> lookup_;
};

struct MaskSet {
  MaskFamily family = MaskFamily::kStandard;
  std::int64_t window = 0;
  std::array<AttentionMask, 4> masks;
  MaskAssignment assignment{1, 1};

  /// Per-window additive masks [windows, Tq, Tk], with -inf replaced by
  /// `masked_value`.
  template <typename T>
  BasicTensor<T> expand(double masked_value = kMaskedLogit) const;
};

inline constexpr std::array<const char*, 4> kMaskNames = {"interior", "right_edge",
                                                          "bottom_edge", "corner"};

/// Standard shifted-window masks. Requires shift == window / 2.
MaskSet build_sw_mask(const WindowGrid& grid);

/// Light-attention masks: queries on the full grid shifted by M/2, keys on
/// the half-resolution grid shifted by M/4. Requires window % 4 == 0.
MaskSet build_light_sw_mask(const WindowGrid& grid);

/// Memoized build; safe for concurrent callers.
std::shared_ptr<const MaskSet> cached_masks(const WindowGrid& grid, MaskFamily family);

}  // namespace muster
