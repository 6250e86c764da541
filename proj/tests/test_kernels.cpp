// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "muster/kernels.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

namespace muster {
namespace {

using testing::random32;
using testing::random64;

constexpr float kInf = std::numeric_limits<float>::infinity();

TEST(Matmul, IdentityAndHandArithmetic) {
  const Tensor x = random32({2, 3}, 1);
  const Tensor eye({2, 2}, {1, 0, 0, 1});
  EXPECT_TRUE(matmul(eye, x).identical(x));
  const Tensor c = matmul(Tensor({1, 2}, {1, 2}), Tensor({2, 1}, {3, 4}));
  EXPECT_EQ(c.dims(), (Shape{1, 1}));
  EXPECT_EQ(c[0], 11.0f);
}

TEST(Matmul, MatchesTripleLoop) {
  const Tensor64 a = random64({7, 5}, 2), b = random64({5, 3}, 3);
  EXPECT_LT(max_abs_diff(matmul(a, b), oracle::matmul(a, b)), 1e-12);
  const Tensor af = a.cast<float>(), bf = b.cast<float>();
  EXPECT_LT(max_abs_diff(matmul(af, bf).cast<double>(), oracle::matmul(a, b)), 1e-5);
}

TEST(Matmul, ShapeErrorNamesBothOperands) {
  try {
    matmul(Tensor({2, 3}), Tensor({4, 2}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShape);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2, 3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4, 2]"), std::string::npos) << msg;
  }
}

TEST(BatchedMatmul, MatchesPerBatchMatmul) {
  const Tensor64 a = random64({3, 4, 5}, 4), b = random64({3, 6, 5}, 5);
  const Tensor64 c = batched_matmul(a, b, false, true);
  ASSERT_EQ(c.dims(), (Shape{3, 4, 6}));
  for (std::int64_t i = 0; i < 3; ++i) {
    Tensor64 ai({4, 5}), bt({5, 6});
    for (std::int64_t r = 0; r < 4; ++r)
      for (std::int64_t k = 0; k < 5; ++k) ai.at(r, k) = a.at(i, r, k);
    for (std::int64_t r = 0; r < 6; ++r)
      for (std::int64_t k = 0; k < 5; ++k) bt.at(k, r) = b.at(i, r, k);
    const Tensor64 ref = oracle::matmul(ai, bt);
    for (std::int64_t r = 0; r < 4; ++r)
      for (std::int64_t k = 0; k < 6; ++k) EXPECT_NEAR(c.at(i, r, k), ref.at(r, k), 1e-12);
  }
}

TEST(Softmax, SymmetricAndMaskedRows) {
  const Tensor s = softmax_rows(Tensor({2, 2}, {0, 0, 3, -kInf}));
  EXPECT_EQ(s.at(0, 0), 0.5f);
  EXPECT_EQ(s.at(0, 1), 0.5f);
  EXPECT_EQ(s.at(1, 0), 1.0f);
  EXPECT_EQ(s.at(1, 1), 0.0f);
}

TEST(Softmax, MatchesHighPrecisionReference) {
  const Tensor s = softmax_rows(Tensor({1, 3}, {1, 2, 3}));
  const Tensor64 ref = oracle::softmax_rows(Tensor64({1, 3}, {1, 2, 3}));
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(s[i], ref[i], 1e-7);
}

TEST(Softmax, RowsSumToOneAndMonotone) {
  const Tensor x = random32({16, 33}, 6, 4.0);
  const Tensor s = softmax_rows(x);
  for (std::int64_t r = 0; r < 16; ++r) {
    double sum = 0;
    for (std::int64_t c = 0; c < 33; ++c) sum += s.at(r, c);
    EXPECT_NEAR(sum, 1.0, 1e-6);
    for (std::int64_t c = 1; c < 33; ++c) {
      if (x.at(r, c) > x.at(r, c - 1)) {
        EXPECT_GE(s.at(r, c), s.at(r, c - 1));
      }
    }
  }
}

TEST(Softmax, FullyMaskedRowIsAnError) {
  EXPECT_THROW_CODE(softmax_rows(Tensor({1, 2}, {-kInf, -kInf})), ErrorCode::kFullyMaskedRow);
}

TEST(LayerNorm, ConstantTokenAndZeroGamma) {
  const Tensor ones = Tensor::full({4}, 1.0f), zeros({4});
  const Tensor x = Tensor::full({2, 4}, 3.5f);
  const Tensor y = layer_norm(x, ones, zeros, 1e-5);
  for (float v : y.data()) EXPECT_EQ(v, 0.0f);
  const Tensor b({4}, {1, 2, 3, 4});
  const Tensor z = layer_norm(random32({3, 4}, 7), zeros, b, 1e-5);
  for (std::int64_t t = 0; t < 3; ++t)
    for (std::int64_t c = 0; c < 4; ++c) EXPECT_EQ(z.at(t, c), b[c]);
}

TEST(LayerNorm, NormalizesAndMatchesTwoPass) {
  const Tensor64 x = random64({4, 8}, 8, 3.0);
  const Tensor64 g = Tensor64::full({8}, 1.0), b({8});
  const Tensor64 y = layer_norm(x, g, b, 1e-5);
  for (std::int64_t t = 0; t < 4; ++t) {
    double mean = 0, var = 0;
    for (std::int64_t c = 0; c < 8; ++c) mean += y.at(t, c);
    mean /= 8;
    for (std::int64_t c = 0; c < 8; ++c) var += (y.at(t, c) - mean) * (y.at(t, c) - mean);
    var /= 8;
    EXPECT_NEAR(mean, 0.0, 1e-5);
    EXPECT_NEAR(var, 1.0, 1e-4);
  }
  const Tensor64 gr = random64({8}, 9), br = random64({8}, 10);
  EXPECT_LT(max_abs_diff(layer_norm(x, gr, br, 1e-5), oracle::layer_norm(x, gr, br, 1e-5)), 1e-6);
  const Tensor xf = x.cast<float>();
  EXPECT_LT(max_abs_diff(layer_norm(xf, gr.cast<float>(), br.cast<float>(), 1e-5).cast<double>(),
                         oracle::layer_norm(x, gr, br, 1e-5)),
            1e-5);
}

TEST(Gelu, KnownValues) {
  const Tensor64 y = gelu(Tensor64({3}, {0.0, 1.0, -1.0}));
  EXPECT_EQ(y[0], 0.0);
  EXPECT_NEAR(y[1], 0.8413447460685429, 1e-12);
  EXPECT_NEAR(y[2], -0.15865525393145707, 1e-12);
}

TEST(PixelShuffle, SingleBlockLayout) {
  const Tensor y = pixel_shuffle(Tensor({1, 1, 4}, {1, 2, 3, 4}), 2);
  ASSERT_EQ(y.dims(), (Shape{2, 2, 1}));
  EXPECT_EQ(y.at(0, 0, 0), 1.0f);
  EXPECT_EQ(y.at(0, 1, 0), 2.0f);
  EXPECT_EQ(y.at(1, 0, 0), 3.0f);
  EXPECT_EQ(y.at(1, 1, 0), 4.0f);
}

TEST(PixelShuffle, ShapeNarrativeAndRoundTrip) {
  const std::int64_t ci = 6;
  const Tensor x = random32({5, 3, 2 * ci}, 11);
  const Tensor y = pixel_shuffle(x, 2);
  EXPECT_EQ(y.dims(), (Shape{10, 6, ci / 2}));
  const Tensor r = random32({6, 6, 8}, 12);
  EXPECT_TRUE(pixel_unshuffle(pixel_shuffle(r, 2), 2).identical(r));
  EXPECT_TRUE(pixel_shuffle(r.cast<double>(), 2).identical(oracle::pixel_shuffle(r.cast<double>(), 2)));
  auto a = r.storage(), b = pixel_shuffle(r, 2).storage();
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_EQ(a, b);
}

TEST(PixelShuffle, ChannelDivisibility) {
  EXPECT_THROW_CODE(pixel_shuffle(Tensor({2, 2, 6}), 2), ErrorCode::kChannelDivisibility);
}

TEST(Conv1x1, IdentityAndOracle) {
  const Tensor x = random32({3, 4, 5}, 13);
  Tensor eye({5, 5});
  for (int i = 0; i < 5; ++i) eye.at(i, i) = 1.0f;
  EXPECT_TRUE(conv1x1(x, eye, Tensor({5})).identical(x));

  const Tensor64 xd = random64({3, 4, 5}, 14), w = random64({5, 7}, 15), b = random64({7}, 16);
  EXPECT_LT(max_abs_diff(conv1x1(xd, w, b), oracle::conv1x1(xd, w, b)), 1e-12);
  // 1x1 image is a vector-matrix product.
  const Tensor64 v = random64({1, 1, 5}, 17);
  const Tensor64 vm = oracle::matmul(v.reshaped({1, 5}), w);
  const Tensor64 out = conv1x1(v, w, Tensor64({7}));
  for (int o = 0; o < 7; ++o) EXPECT_NEAR(out[o], vm[o], 1e-12);
  EXPECT_THROW_CODE(conv1x1(x, Tensor({4, 2}), Tensor({2})), ErrorCode::kShape);
}

TEST(DepthwiseDown2, AveragePoolAndSubsample) {
  const Tensor x = random32({4, 6, 3}, 18);
  const Tensor avg = depthwise_conv_down2(x, Tensor::full({2, 2, 3}, 0.25f), Tensor({3}));
  Tensor onehot({2, 2, 3});
  for (int c = 0; c < 3; ++c) onehot.at(0, 0, c) = 1.0f;
  const Tensor sub = depthwise_conv_down2(x, onehot, Tensor({3}));
  ASSERT_EQ(avg.dims(), (Shape{2, 3, 3}));
  for (std::int64_t i = 0; i < 2; ++i)
    for (std::int64_t j = 0; j < 3; ++j)
      for (std::int64_t c = 0; c < 3; ++c) {
        const float mean = 0.25f * (x.at(2 * i, 2 * j, c) + x.at(2 * i, 2 * j + 1, c) +
                                    x.at(2 * i + 1, 2 * j, c) + x.at(2 * i + 1, 2 * j + 1, c));
        EXPECT_NEAR(avg.at(i, j, c), mean, 1e-6);
        EXPECT_EQ(sub.at(i, j, c), x.at(2 * i, 2 * j, c));
      }
}

TEST(DepthwiseDown2, OracleAndChannelIsolation) {
  const Tensor64 x = random64({6, 4, 5}, 19), w = random64({2, 2, 5}, 20), b = random64({5}, 21);
  const Tensor64 y = depthwise_conv_down2(x, w, b);
  EXPECT_LT(max_abs_diff(y, oracle::depthwise_down2(x, w, b)), 1e-12);
  Tensor64 x2 = x;
  for (std::int64_t i = 0; i < 6; ++i)
    for (std::int64_t j = 0; j < 4; ++j) x2.at(i, j, 3) += 10.0;
  const Tensor64 y2 = depthwise_conv_down2(x2, w, b);
  for (std::int64_t i = 0; i < 3; ++i)
    for (std::int64_t j = 0; j < 2; ++j)
      for (std::int64_t c = 0; c < 5; ++c)
        if (c != 3) {
          EXPECT_EQ(y.at(i, j, c), y2.at(i, j, c));
        }
  EXPECT_THROW_CODE(depthwise_conv_down2(Tensor({3, 4, 5}), w.cast<float>(), b.cast<float>()),
                    ErrorCode::kParity);
}

TEST(Bilinear, ConstantAndHalfPixelRamp) {
  const Tensor c = upsample_bilinear2x(Tensor::full({3, 2, 2}, 1.25f));
  EXPECT_EQ(c.dims(), (Shape{6, 4, 2}));
  for (float v : c.data()) EXPECT_EQ(v, 1.25f);
  const Tensor ramp = upsample_bilinear2x(Tensor({1, 2, 1}, {0, 1}));
  ASSERT_EQ(ramp.dims(), (Shape{2, 4, 1}));
  const float want[4] = {0.0f, 0.25f, 0.75f, 1.0f};
  for (int j = 0; j < 4; ++j) {
    EXPECT_FLOAT_EQ(ramp.at(0, j, 0), want[j]);
    EXPECT_FLOAT_EQ(ramp.at(1, j, 0), want[j]);
  }
}

TEST(Bilinear, AdjointIsTranspose) {
  const Tensor64 x = random64({3, 5, 2}, 22), g = random64({12, 20, 2}, 23);
  const Tensor64 ux = upsample_bilinear(x, 4);
  const Tensor64 ag = upsample_bilinear_adjoint(g, 4);
  double lhs = 0, rhs = 0;
  for (std::int64_t i = 0; i < ux.size(); ++i) lhs += ux[i] * g[i];
  for (std::int64_t i = 0; i < x.size(); ++i) rhs += x[i] * ag[i];
  EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(TransposedConv, OneHotKernelReplicatesBlocks) {
  const Tensor x = random32({2, 3, 4}, 24);
  Tensor w({2, 2, 4, 4});
  for (int di = 0; di < 2; ++di)
    for (int dj = 0; dj < 2; ++dj)
      for (int c = 0; c < 4; ++c) w.at(di, dj, c, c) = 1.0f;
  const Tensor y = transposed_conv2x2(x, w, Tensor({4}));
  ASSERT_EQ(y.dims(), (Shape{4, 6, 4}));
  for (std::int64_t i = 0; i < 4; ++i)
    for (std::int64_t j = 0; j < 6; ++j)
      for (std::int64_t c = 0; c < 4; ++c) EXPECT_EQ(y.at(i, j, c), x.at(i / 2, j / 2, c));
}

TEST(Concat, PreservesOperandOrder) {
  const Tensor a = random32({2, 3, 2}, 25), b = random32({2, 3, 5}, 26);
  const Tensor c = concat_channels(a, b);
  ASSERT_EQ(c.dims(), (Shape{2, 3, 7}));
  for (std::int64_t i = 0; i < 2; ++i)
    for (std::int64_t j = 0; j < 3; ++j) {
      for (std::int64_t k = 0; k < 2; ++k) EXPECT_EQ(c.at(i, j, k), a.at(i, j, k));
      for (std::int64_t k = 0; k < 5; ++k) EXPECT_EQ(c.at(i, j, 2 + k), b.at(i, j, k));
    }
  EXPECT_THROW_CODE(concat_channels(a, Tensor({2, 4, 5})), ErrorCode::kShape);
}

TEST(Kernels, PureFunctions) {
  const Tensor x = random32({8, 8, 16}, 27), w = random32({16, 16}, 28), b = random32({16}, 29);
  EXPECT_TRUE(conv1x1(x, w, b).identical(conv1x1(x, w, b)));
  EXPECT_TRUE(softmax_rows(x).identical(softmax_rows(x)));
}

TEST(Heads, SplitMergeRoundTrip) {
  const Tensor x = random32({3, 5, 12}, 30);
  const Tensor s = split_heads(x, 4);
  EXPECT_EQ(s.dims(), (Shape{12, 5, 3}));
  EXPECT_EQ(s.at(1 * 4 + 2, 3, 1), x.at(1, 3, 2 * 3 + 1));
  EXPECT_TRUE(merge_heads(s, 4).identical(x));
}

}  // namespace
}  // namespace muster
