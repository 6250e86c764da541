// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0

#include "muster/windowing.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <mutex>
#include <string>
#include <tuple>

namespace muster {

void WindowGrid::validate() const {
  if (window < 2 || window % 2 != 0) {
    throw Error(ErrorCode::kConfig, "window size must be even and >= 2, got " +
                                        std::to_string(window));
  }
  if (height < 1 || width < 1 || height % window != 0 || width % window != 0) {
    throw Error(ErrorCode::kPartition, "grid " + std::to_string(height) + "x" +
                                           std::to_string(width) +
                                           " is not divisible by window " +
                                           std::to_string(window));
  }
  if (shift != 0 && shift != window / 2) {
    throw Error(ErrorCode::kUnsupportedShift,
                "shift must be 0 or window/2, got " + std::to_string(shift));
  }
}

std::int64_t padded_extent(std::int64_t extent, std::int64_t window) {
  return (extent + window - 1) / window * window;
}

template <typename T>
BasicTensor<T> pad_hw(const BasicTensor<T>& x, std::int64_t height, std::int64_t width) {
  require_rank(x, 3, "pad_hw");
  const std::int64_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  if (height < H || width < W) {
    throw Error(ErrorCode::kShape, "pad_hw: target smaller than input " + shape_string(x.dims()));
  }
  if (height == H && width == W) return x;
  BasicTensor<T> y({height, width, C});
  for (std::int64_t i = 0; i < H; ++i)
    std::copy_n(&x.at(i, 0, 0), W * C, &y.at(i, 0, 0));
  return y;
}

template <typename T>
BasicTensor<T> crop_hw(const BasicTensor<T>& x, std::int64_t height, std::int64_t width) {
  require_rank(x, 3, "crop_hw");
  const std::int64_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  if (height > H || width > W || height < 1 || width < 1) {
    throw Error(ErrorCode::kShape, "crop_hw: target outside input " + shape_string(x.dims()));
  }
  if (height == H && width == W) return x;
  BasicTensor<T> y({height, width, C});
  for (std::int64_t i = 0; i < height; ++i)
    std::copy_n(&x.at(i, 0, 0), width * C, &y.at(i, 0, 0));
  return y;
}

template <typename T>
BasicTensor<T> window_partition(const BasicTensor<T>& x, std::int64_t window) {
  require_rank(x, 3, "window_partition");
  const std::int64_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  if (window < 1 || H % window != 0 || W % window != 0) {
    throw Error(ErrorCode::kPartition, "window_partition: " + shape_string(x.dims()) +
                                           " not divisible by window " + std::to_string(window));
  }
  const std::int64_t nh = H / window, nw = W / window;
  BasicTensor<T> y({nh * nw, window * window, C});
  for (std::int64_t wi = 0; wi < nh; ++wi)
    for (std::int64_t wj = 0; wj < nw; ++wj)
      for (std::int64_t a = 0; a < window; ++a)
        std::copy_n(&x.at(wi * window + a, wj * window, 0), window * C,
                    &y.at(wi * nw + wj, a * window, 0));
  return y;
}

template <typename T>
BasicTensor<T> window_reverse(const BasicTensor<T>& windows, std::int64_t window,
                              std::int64_t height, std::int64_t width) {
  require_rank(windows, 3, "window_reverse");
  if (window < 1 || height % window != 0 || width % window != 0 ||
      windows.dim(0) != (height / window) * (width / window) ||
      windows.dim(1) != window * window) {
    throw Error(ErrorCode::kPartition, "window_reverse: " + shape_string(windows.dims()) +
                                           " does not tile " + std::to_string(height) + "x" +
                                           std::to_string(width));
  }
  const std::int64_t nw = width / window, C = windows.dim(2);
  BasicTensor<T> y({height, width, C});
  for (std::int64_t wi = 0; wi < height / window; ++wi)
    for (std::int64_t wj = 0; wj < nw; ++wj)
      for (std::int64_t a = 0; a < window; ++a)
        std::copy_n(&windows.at(wi * nw + wj, a * window, 0), window * C,
                    &y.at(wi * window + a, wj * window, 0));
  return y;
}

template <typename T>
BasicTensor<T> cyclic_shift(const BasicTensor<T>& x, std::int64_t s) {
  require_rank(x, 3, "cyclic_shift");
  const std::int64_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  const std::int64_t sh = ((s % H) + H) % H;
  const std::int64_t sw = ((s % W) + W) % W;
  if (sh == 0 && sw == 0) return x;
  BasicTensor<T> y({H, W, C});
  for (std::int64_t i = 0; i < H; ++i)
    for (std::int64_t j = 0; j < W; ++j)
      std::copy_n(&x.at((i + sh) % H, (j + sw) % W, 0), C, &y.at(i, j, 0));
  return y;
}

MaskAssignment::MaskAssignment(std::int64_t rows, std::int64_t cols) : rows_(rows), cols_(cols) {
  lookup_ = {{0b00, 0}, {0b01, 1}, {0b10, 2}, {0b11, 3}};
}

int MaskAssignment::id(std::int64_t wi, std::int64_t wj) const {
  const auto key = static_cast<std::uint8_t>(((wi == rows_ - 1) ? 2 : 0) | ((wj == cols_ - 1) ? 1 : 0));
  return lookup_.at(key);
}

std::vector<int> MaskAssignment::ids() const {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(rows_ * cols_));
  for (std::int64_t wi = 0; wi < rows_; ++wi)
    for (std::int64_t wj = 0; wj < cols_; ++wj) out.push_back(id(wi, wj));
  return out;
}

template <typename T>
BasicTensor<T> MaskSet::expand(double masked_value) const {
  const auto ids = assignment.ids();
  const std::int64_t tq = masks[0].matrix.dim(0), tk = masks[0].matrix.dim(1);
  BasicTensor<T> out({static_cast<std::int64_t>(ids.size()), tq, tk});
  for (std::size_t w = 0; w < ids.size(); ++w) {
    const Tensor& m = masks[static_cast<std::size_t>(ids[w])].matrix;
    T* dst = &out.at(static_cast<std::int64_t>(w), 0, 0);
    for (std::int64_t i = 0; i < tq * tk; ++i) {
      dst[i] = m[i] == 0.0f ? T{0} : static_cast<T>(masked_value);
    }
  }
  return out;
}

namespace {

constexpr float kNegInf = -std::numeric_limits<float>::infinity();

// Region id along one axis of extent `extent` for a coordinate on the
// shifted grid: 0 below extent - shift, 1 from there on.
int axis_region(std::int64_t shifted_coord, std::int64_t extent, std::int64_t shift) {
  return shifted_coord >= extent - shift ? 1 : 0;
}

// Masks only depend on the window size; build them on a canonical 2x2-window
// grid so every id has a concrete representative window.
struct Representative {
  std::int64_t wi, wj;
};

constexpr std::array<Representative, 4> kRepresentatives = {{{0, 0}, {0, 1}, {1, 0}, {1, 1}}};

void check_mask_rows(const Tensor& m) {
  for (std::int64_t q = 0; q < m.dim(0); ++q) {
    bool any_open = false;
    for (std::int64_t k = 0; k < m.dim(1); ++k) any_open |= (m.at(q, k) == 0.0f);
    if (!any_open) {
      throw Error(ErrorCode::kMaskConsistency,
                  "mask row " + std::to_string(q) + " has no visible key");
    }
  }
}

}  // namespace

MaskSet build_sw_mask(const WindowGrid& grid) {
  grid.validate();
  if (grid.shift != grid.window / 2) {
    throw Error(ErrorCode::kUnsupportedShift,
                "build_sw_mask requires shift == window/2, got " + std::to_string(grid.shift));
  }
  const std::int64_t M = grid.window, s = grid.shift, extent = 2 * M;
  MaskSet set;
  set.family = MaskFamily::kStandard;
  set.window = M;
  set.assignment = MaskAssignment(grid.rows(), grid.cols());

  for (std::size_t id = 0; id < 4; ++id) {
    const auto [wi, wj] = kRepresentatives[id];
    auto region = [&](std::int64_t t) {
      const std::int64_t r = wi * M + t / M, c = wj * M + t % M;
      return axis_region(r, extent, s) * 2 + axis_region(c, extent, s);
    };
    Tensor m({M * M, M * M});
    for (std::int64_t q = 0; q < M * M; ++q)
      for (std::int64_t k = 0; k < M * M; ++k)
        m.at(q, k) = region(q) == region(k) ? 0.0f : kNegInf;
    check_mask_rows(m);
    set.masks[id].matrix = std::move(m);
  }
  return set;
}

MaskSet build_light_sw_mask(const WindowGrid& grid) {
  grid.validate();
  if (grid.window % 4 != 0) {
    throw Error(ErrorCode::kConfig, "light masks need window % 4 == 0, got " +
                                        std::to_string(grid.window));
  }
  if (grid.shift != grid.window / 2) {
    throw Error(ErrorCode::kUnsupportedShift,
                "build_light_sw_mask requires shift == window/2, got " +
                    std::to_string(grid.shift));
  }
  const std::int64_t M = grid.window, s = grid.shift, extent = 2 * M;
  const std::int64_t half = M / 2, half_extent = extent / 2, key_shift = M / 4;
  MaskSet set;
  set.family = MaskFamily::kLight;
  set.window = M;
  set.assignment = MaskAssignment(grid.rows(), grid.cols());

  // Full-resolution shifted coordinate of a full-resolution source row.
  auto to_shifted = [&](std::int64_t src) { return ((src - s) % extent + extent) % extent; };

  for (std::size_t id = 0; id < 4; ++id) {
    const auto [wi, wj] = kRepresentatives[id];
    auto query_region = [&](std::int64_t t) {
      const std::int64_t r = wi * M + t / M, c = wj * M + t % M;
      return axis_region(r, extent, s) * 2 + axis_region(c, extent, s);
    };
    // A key token is a 2x2 block of source pixels; all four must agree.
    auto key_region = [&](std::int64_t t) {
      const std::int64_t u = wi * half + t / half, v = wj * half + t % half;
      const std::int64_t su = (u + key_shift) % half_extent, sv = (v + key_shift) % half_extent;
      int region = -1;
      for (std::int64_t di = 0; di < 2; ++di)
        for (std::int64_t dj = 0; dj < 2; ++dj) {
          const int r = axis_region(to_shifted(2 * su + di), extent, s) * 2 +
                        axis_region(to_shifted(2 * sv + dj), extent, s);
          if (region >= 0 && r != region) {
            throw Error(ErrorCode::kMaskConsistency,
                        "key block " + std::to_string(t) + " straddles two regions");
          }
          region = r;
        }
      return region;
    };
    Tensor m({M * M, half * half});
    for (std::int64_t k = 0; k < half * half; ++k) {
      const int kr = key_region(k);
      for (std::int64_t q = 0; q < M * M; ++q)
        m.at(q, k) = query_region(q) == kr ? 0.0f : kNegInf;
    }
    check_mask_rows(m);
    set.masks[id].matrix = std::move(m);
  }
  return set;
}

std::shared_ptr<const MaskSet> cached_masks(const WindowGrid& grid, MaskFamily family) {
  using Key = std::tuple<std::int64_t, std::int64_t, std::int64_t, std::int64_t, int>;
  static std::mutex mu;
  static std::map<Key, std::shared_ptr<const MaskSet>> cache;
  const Key key{grid.height, grid.width, grid.window, grid.shift, static_cast<int>(family)};
  std::lock_guard lock(mu);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  auto set = std::make_shared<const MaskSet>(family == MaskFamily::kStandard
                                                 ? build_sw_mask(grid)
                                                 : build_light_sw_mask(grid));
  cache.emplace(key, set);
  return set;
}

#define MUSTER_INSTANTIATE_WINDOWING(T)                                                        \
  template BasicTensor<T> pad_hw(const BasicTensor<T>&, std::int64_t, std::int64_t);           \
  template BasicTensor<T> crop_hw(const BasicTensor<T>&, std::int64_t, std::int64_t);          \
  template BasicTensor<T> window_partition(const BasicTensor<T>&, std::int64_t);               \
  template BasicTensor<T> window_reverse(const BasicTensor<T>&, std::int64_t, std::int64_t,    \
                                         std::int64_t);                                        \
  template BasicTensor<T> cyclic_shift(const BasicTensor<T>&, std::int64_t);                   \
  template BasicTensor<T> MaskSet::expand<T>(double) const;

MUSTER_INSTANTIATE_WINDOWING(float)
MUSTER_INSTANTIATE_WINDOWING(double)

#undef MUSTER_INSTANTIATE_WINDOWING

}  // namespace muster
