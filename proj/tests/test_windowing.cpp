// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "muster/windowing.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

namespace muster {
namespace {

using testing::random32;

TEST(WindowPartition, SingleWindowFlattensRowMajor) {
  const Tensor x = random32({4, 4, 2}, 1);
  const Tensor w = window_partition(x, 4);
  ASSERT_EQ(w.dims(), (Shape{1, 16, 2}));
  EXPECT_TRUE(w.reshaped({4, 4, 2}).identical(x));
}

TEST(WindowPartition, RoundTripAndIndexMap) {
  const Tensor x = random32({24, 24, 3}, 2);
  const Tensor w = window_partition(x, 12);
  ASSERT_EQ(w.dims(), (Shape{4, 144, 3}));
  EXPECT_TRUE(window_reverse(w, 12, 24, 24).identical(x));
  const Tensor y = random32({12, 8, 2}, 3);
  const Tensor wy = window_partition(y, 4);
  for (std::int64_t wi = 0; wi < 3; ++wi)
    for (std::int64_t wj = 0; wj < 2; ++wj)
      for (std::int64_t t = 0; t < 16; ++t) {
        const auto [r, c] = oracle::window_token_pixel(t, wi, wj, 4);
        EXPECT_EQ(wy.at(wi * 2 + wj, t, 1), y.at(r, c, 1));
      }
  EXPECT_THROW_CODE(window_partition(Tensor({10, 12, 1}), 12), ErrorCode::kPartition);
}

TEST(CyclicShift, IdentityCases) {
  const Tensor x = random32({8, 8, 2}, 4);
  EXPECT_TRUE(cyclic_shift(x, 0).identical(x));
  EXPECT_TRUE(cyclic_shift(x, 8).identical(x));
  EXPECT_TRUE(cyclic_shift(cyclic_shift(x, 3), 5).identical(x));
  EXPECT_TRUE(cyclic_shift(cyclic_shift(x, 3), -3).identical(x));
  const Tensor s = cyclic_shift(x, 3);
  EXPECT_EQ(s.at(0, 0, 1), x.at(3, 3, 1));
  EXPECT_EQ(s.at(6, 7, 0), x.at(1, 2, 0));
}

TEST(Padding, PadThenCropRestores) {
  const Tensor x = random32({5, 7, 2}, 5);
  EXPECT_EQ(padded_extent(5, 4), 8);
  EXPECT_EQ(padded_extent(8, 4), 8);
  const Tensor p = pad_hw(x, 8, 8);
  EXPECT_EQ(p.at(7, 7, 1), 0.0f);
  EXPECT_EQ(p.at(4, 6, 1), x.at(4, 6, 1));
  EXPECT_TRUE(crop_hw(p, 5, 7).identical(x));
}

TEST(WindowGrid, Validation) {
  EXPECT_THROW_CODE((WindowGrid{8, 8, 3, 0}.validate()), ErrorCode::kConfig);
  EXPECT_THROW_CODE((WindowGrid{8, 6, 4, 0}.validate()), ErrorCode::kPartition);
  EXPECT_THROW_CODE((WindowGrid{8, 8, 4, 1}.validate()), ErrorCode::kUnsupportedShift);
  EXPECT_NO_THROW((WindowGrid{8, 8, 4, 2}.validate()));
}

TEST(MaskAssignment, KeyedOnLastRowAndColumn) {
  const MaskAssignment a(4, 3);
  std::set<int> ids;
  for (std::int64_t i = 0; i < 4; ++i)
    for (std::int64_t j = 0; j < 3; ++j) {
      const int want = (i == 3 ? 2 : 0) + (j == 2 ? 1 : 0);
      EXPECT_EQ(a.id(i, j), want);
      ids.insert(a.id(i, j));
    }
  EXPECT_EQ(ids.size(), 4u);
  EXPECT_EQ(a.ids().size(), 12u);
}

TEST(StandardMask, InteriorAllZeroAndErrors) {
  const MaskSet set = build_sw_mask({24, 24, 12, 6});
  for (float v : set.masks[0].matrix.data()) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW_CODE(build_sw_mask({24, 24, 12, 0}), ErrorCode::kUnsupportedShift);
}

TEST(StandardMask, CornerHasFourRegionClasses) {
  const std::int64_t M = 4, s = 2;
  const MaskSet set = build_sw_mask({8, 8, M, s});
  const Tensor& corner = set.masks[3].matrix;
  // Region class of a corner-window token from its pre-shift source pixel.
  auto region = [&](std::int64_t t) {
    const std::int64_t r = M + t / M, c = M + t % M;
    return ((r + s) % 8 < s ? 1 : 0) * 2 + ((c + s) % 8 < s ? 1 : 0);
  };
  std::set<int> classes;
  for (std::int64_t q = 0; q < M * M; ++q) {
    classes.insert(region(q));
    for (std::int64_t k = 0; k < M * M; ++k) {
      EXPECT_EQ(corner.at(q, k) == 0.0f, region(q) == region(k)) << q << "," << k;
      if (corner.at(q, k) != 0.0f) {
        EXPECT_TRUE(std::isinf(corner.at(q, k)));
      }
    }
  }
  EXPECT_EQ(classes.size(), 4u);
}

TEST(LightMask, ShapesAndErrors) {
  EXPECT_EQ(build_light_sw_mask({8, 8, 4, 2}).masks[3].matrix.dims(), (Shape{16, 4}));
  EXPECT_EQ(build_light_sw_mask({24, 24, 12, 6}).masks[0].matrix.dims(), (Shape{144, 36}));
  const MaskSet big = build_light_sw_mask({24, 24, 12, 6});
  for (float v : big.masks[0].matrix.data()) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW_CODE(build_light_sw_mask({12, 12, 6, 3}), ErrorCode::kConfig);
}

TEST(Masks, MatchBruteForceOracle) {
  for (std::int64_t M : {4, 8, 12})
    for (std::int64_t nh = 2; nh <= 4; ++nh)
      for (std::int64_t nw = 2; nw <= 4; ++nw)
        for (auto family : {MaskFamily::kStandard, MaskFamily::kLight}) {
          const auto cmp = oracle::compare_masks({nh * M, nw * M, M, M / 2}, family);
          EXPECT_TRUE(cmp.equal) << "M=" << M << " " << nh << "x" << nw << " " << cmp.detail;
          EXPECT_EQ(cmp.distinct, 4);
        }
}

TEST(Masks, EveryRowHasAVisibleKey) {
  for (auto family : {MaskFamily::kStandard, MaskFamily::kLight}) {
    const auto set = cached_masks({24, 24, 12, 6}, family);
    for (const auto& m : set->masks) {
      for (std::int64_t q = 0; q < m.matrix.dim(0); ++q) {
        bool any = false;
        for (std::int64_t k = 0; k < m.matrix.dim(1); ++k) any = any || m.matrix.at(q, k) == 0.0f;
        EXPECT_TRUE(any);
      }
    }
  }
}

TEST(Masks, CacheReturnsSameInstance) {
  const WindowGrid g{16, 16, 4, 2};
  EXPECT_EQ(cached_masks(g, MaskFamily::kStandard).get(),
            cached_masks(g, MaskFamily::kStandard).get());
  EXPECT_NE(cached_masks(g, MaskFamily::kStandard).get(), cached_masks(g, MaskFamily::kLight).get());
}

TEST(Masks, ExpandFollowsAssignment) {
  const MaskSet set = build_sw_mask({12, 8, 4, 2});
  const Tensor64 e = set.expand<double>();
  ASSERT_EQ(e.dims(), (Shape{6, 16, 16}));
  for (std::int64_t w = 0; w < 6; ++w) {
    const auto& m = set.masks[static_cast<std::size_t>(set.assignment.id(w / 2, w % 2))].matrix;
    for (std::int64_t i = 0; i < 256; ++i) {
      EXPECT_EQ(e[w * 256 + i], m[i] == 0.0f ? 0.0 : kMaskedLogit);
    }
  }
}

}  // namespace
}  // namespace muster
