// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0
//
// Numerical kernels shared by every module. All kernels are pure functions
// of their inputs and are instantiated for float (forward / IO) and double
// (gradient checks).

#pragma once

#include <cstdint>

#include "muster/tensor.hpp"

namespace muster {

/// c[i,j] = sum_t a[i,t] * b[t,j]
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Batched product over a leading axis: a [B,m,k] x b [B,k,n] -> [B,m,n].
/// With transpose_b, b is read as [B,n,k]; with transpose_a, a as [B,k,m].
template <typename T>
BasicTensor<T> batched_matmul(const BasicTensor<T>& a, const BasicTensor<T>& b,
                              bool transpose_a = false, bool transpose_b = false);

/// Softmax along the last axis with max subtraction. -inf entries get
/// exactly 0; a row that is entirely -inf is an error.
template <typename T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& x);

/// Normalizes each token over the last axis (population variance).
template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, double eps);

/// Exact (erf) GELU and its derivative.
template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> gelu_derivative(const BasicTensor<T>& x);

/// [H,W,C] -> [rH, rW, C/r^2]; out[r*i+di, r*j+dj, c] = in[i, j, c*r^2 + di*r + dj].
template <typename T>
BasicTensor<T> pixel_shuffle(const BasicTensor<T>& x, int r);
template <typename T>
BasicTensor<T> pixel_unshuffle(const BasicTensor<T>& x, int r);

/// Pointwise projection over the last axis: [..., Cin] x [Cin, Cout] -> [..., Cout].
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& w);

/// [H,W,Cin] -> [H,W,Cout]; same as linear() followed by a bias add.
template <typename T>
BasicTensor<T> conv1x1(const BasicTensor<T>& x, const BasicTensor<T>& w,
                       const BasicTensor<T>& b);

/// 2x2 stride-2 depthwise convolution: [H,W,C] with w [2,2,C] -> [H/2,W/2,C].
template <typename T>
BasicTensor<T> depthwise_conv_down2(const BasicTensor<T>& x, const BasicTensor<T>& w,
                                    const BasicTensor<T>& b);

/// Bilinear resize by an integer factor, half-pixel (align_corners=false)
/// sampling with edge clamping.
template <typename T>
BasicTensor<T> upsample_bilinear(const BasicTensor<T>& x, int factor);
template <typename T>
BasicTensor<T> upsample_bilinear2x(const BasicTensor<T>& x) {
  return upsample_bilinear(x, 2);
}
/// Adjoint of upsample_bilinear: scatters `grad` [fH,fW,C] back onto [H,W,C].
template <typename T>
BasicTensor<T> upsample_bilinear_adjoint(const BasicTensor<T>& grad, int factor);

/// Kernel 2x2, stride 2: out[2i+di, 2j+dj, o] = b[o] + sum_c x[i,j,c] * w[di,dj,c,o].
template <typename T>
BasicTensor<T> transposed_conv2x2(const BasicTensor<T>& x, const BasicTensor<T>& w,
                                  const BasicTensor<T>& b);

/// Channel concatenation of equally sized [H,W,*] maps, `a` first.
template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
/// x[..., C] + bias[C]
template <typename T>
BasicTensor<T> add_bias(const BasicTensor<T>& x, const BasicTensor<T>& bias);
template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, double s);
/// Sum over all but the last axis: [..., C] -> [C].
template <typename T>
BasicTensor<T> sum_to_last(const BasicTensor<T>& x);

/// [B, T, heads*d] -> [B*heads, T, d] and back.
template <typename T>
BasicTensor<T> split_heads(const BasicTensor<T>& x, std::int64_t heads);
template <typename T>
BasicTensor<T> merge_heads(const BasicTensor<T>& x, std::int64_t heads);

}  // namespace muster
