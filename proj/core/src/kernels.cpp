// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0

#include "muster/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "muster/parallel.hpp"

namespace muster {

namespace {

[[noreturn]] void shape_error(const std::string& what, const Shape& a, const Shape& b) {
  throw Error(ErrorCode::kShape, what + ": " + shape_string(a) + " vs " + shape_string(b));
}

template <typename T>
void require_hwc(const BasicTensor<T>& x, const char* what) {
  require_rank(x, 3, what);
}

void count_macs(std::uint64_t n) {
  if (detail::mac_counting_enabled()) detail::add_macs(n);
}

}  // namespace

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank(a, 2, "matmul lhs");
  require_rank(b, 2, "matmul rhs");
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw Error(ErrorCode::kShape, "matmul: inner extents differ, lhs has " + std::to_string(k) +
                                       " columns but rhs has " + std::to_string(b.dim(0)) +
                                       " rows (" + shape_string(a.dims()) + " x " +
                                       shape_string(b.dims()) + ")");
  }
  BasicTensor<T> c({m, n});
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  T* pc = c.data().data();
  parallel_for(m, k * n, [&](std::int64_t r0, std::int64_t r1) {
    std::uint64_t macs = 0;
    for (std::int64_t i = r0; i < r1; ++i) {
      T* row = pc + i * n;
      for (std::int64_t t = 0; t < k; ++t) {
        const T av = pa[i * k + t];
        const T* brow = pb + t * n;
        for (std::int64_t j = 0; j < n; ++j) row[j] += av * brow[j];
        macs += static_cast<std::uint64_t>(n);
      }
    }
    count_macs(macs);
  });
  return c;
}

template <typename T>
BasicTensor<T> batched_matmul(const BasicTensor<T>& a, const BasicTensor<T>& b,
                              bool transpose_a, bool transpose_b) {
  require_rank(a, 3, "batched_matmul lhs");
  require_rank(b, 3, "batched_matmul rhs");
  if (a.dim(0) != b.dim(0)) shape_error("batched_matmul batch extents", a.dims(), b.dims());
  if (transpose_a && transpose_b) {
    throw Error(ErrorCode::kShape, "batched_matmul: transposing both operands is not supported");
  }
  const std::int64_t batch = a.dim(0);
  const std::int64_t m = transpose_a ? a.dim(2) : a.dim(1);
  const std::int64_t k = transpose_a ? a.dim(1) : a.dim(2);
  const std::int64_t kb = transpose_b ? b.dim(2) : b.dim(1);
  const std::int64_t n = transpose_b ? b.dim(1) : b.dim(2);
  if (k != kb) shape_error("batched_matmul inner extents", a.dims(), b.dims());

  BasicTensor<T> c({batch, m, n});
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  T* pc = c.data().data();
  const std::int64_t a_stride = a.size() / batch;
  const std::int64_t b_stride = b.size() / batch;
  // One work item per output row across all batches.
  parallel_for(batch * m, k * n, [&](std::int64_t r0, std::int64_t r1) {
    std::uint64_t macs = 0;
    for (std::int64_t r = r0; r < r1; ++r) {
      const std::int64_t bi = r / m, i = r % m;
      const T* A = pa + bi * a_stride;
      const T* B = pb + bi * b_stride;
      T* row = pc + bi * m * n + i * n;
      if (transpose_b) {
        for (std::int64_t j = 0; j < n; ++j) {
          T acc = 0;
          const T* arow = A + i * k;
          const T* brow = B + j * k;
          for (std::int64_t t = 0; t < k; ++t) acc += arow[t] * brow[t];
          row[j] = acc;
          macs += static_cast<std::uint64_t>(k);
        }
      } else {
        for (std::int64_t t = 0; t < k; ++t) {
          const T av = transpose_a ? A[t * m + i] : A[i * k + t];
          const T* brow = B + t * n;
          for (std::int64_t j = 0; j < n; ++j) row[j] += av * brow[j];
          macs += static_cast<std::uint64_t>(n);
        }
      }
    }
    count_macs(macs);
  });
  return c;
}

template <typename T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& x) {
  const std::int64_t cols = x.dims().back();
  const std::int64_t rows = x.size() / cols;
  BasicTensor<T> y(x.dims());
  const T* px = x.data().data();
  T* py = y.data().data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* in = px + r * cols;
    T* out = py + r * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::int64_t c = 0; c < cols; ++c) mx = std::max(mx, static_cast<double>(in[c]));
    if (std::isinf(mx) && mx < 0) {
      throw Error(ErrorCode::kFullyMaskedRow,
                  "softmax: fully masked row " + std::to_string(r) + " (malformed mask)");
    }
    double sum = 0.0;
    std::vector<double> e(static_cast<std::size_t>(cols));
    for (std::int64_t c = 0; c < cols; ++c) {
      e[c] = std::exp(static_cast<double>(in[c]) - mx);
      sum += e[c];
    }
    for (std::int64_t c = 0; c < cols; ++c) out[c] = static_cast<T>(e[c] / sum);
  }
  return y;
}

template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, double eps) {
  if (!(eps > 0.0)) throw Error(ErrorCode::kConfig, "layer_norm: eps must be > 0");
  const std::int64_t C = x.dims().back();
  if (gamma.size() != C || beta.size() != C) {
    shape_error("layer_norm affine extents", x.dims(), gamma.dims());
  }
  const std::int64_t tokens = x.size() / C;
  BasicTensor<T> y(x.dims());
  const T* px = x.data().data();
  T* py = y.data().data();
  for (std::int64_t t = 0; t < tokens; ++t) {
    const T* in = px + t * C;
    T* out = py + t * C;
    double mean = 0.0;
    for (std::int64_t c = 0; c < C; ++c) mean += in[c];
    mean /= static_cast<double>(C);
    double var = 0.0;
    for (std::int64_t c = 0; c < C; ++c) {
      const double d = in[c] - mean;
      var += d * d;
    }
    var /= static_cast<double>(C);
    const double rstd = 1.0 / std::sqrt(var + eps);
    for (std::int64_t c = 0; c < C; ++c) {
      out[c] = static_cast<T>((in[c] - mean) * rstd * gamma[c] + beta[c]);
    }
  }
  return y;
}

template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x) {
  BasicTensor<T> y(x.dims());
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    y[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)));
  }
  return y;
}

template <typename T>
BasicTensor<T> gelu_derivative(const BasicTensor<T>& x) {
  BasicTensor<T> y(x.dims());
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
    const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
    y[i] = static_cast<T>(cdf + v * pdf);
  }
  return y;
}

template <typename T>
BasicTensor<T> pixel_shuffle(const BasicTensor<T>& x, int r) {
  require_hwc(x, "pixel_shuffle");
  const std::int64_t H = x.dim(0), W = x.dim(1), C = x.dim(2), rr = std::int64_t{r} * r;
  if (r < 1 || C % rr != 0) {
    throw Error(ErrorCode::kChannelDivisibility,
                "pixel_shuffle: channels " + std::to_string(C) + " not divisible by r^2 = " +
                    std::to_string(rr));
  }
  const std::int64_t Co = C / rr;
  BasicTensor<T> y({H * r, W * r, Co});
  for (std::int64_t i = 0; i < H; ++i)
    for (std::int64_t j = 0; j < W; ++j)
      for (std::int64_t c = 0; c < Co; ++c)
        for (std::int64_t di = 0; di < r; ++di)
          for (std::int64_t dj = 0; dj < r; ++dj)
            y.at(r * i + di, r * j + dj, c) = x.at(i, j, c * rr + di * r + dj);
  return y;
}

template <typename T>
BasicTensor<T> pixel_unshuffle(const BasicTensor<T>& x, int r) {
  require_hwc(x, "pixel_unshuffle");
  const std::int64_t H = x.dim(0), W = x.dim(1), C = x.dim(2), rr = std::int64_t{r} * r;
  if (r < 1 || H % r != 0 || W % r != 0) {
    throw Error(ErrorCode::kParity, "pixel_unshuffle: spatial extents " + shape_string(x.dims()) +
                                        " not divisible by " + std::to_string(r));
  }
  BasicTensor<T> y({H / r, W / r, C * rr});
  for (std::int64_t i = 0; i < H / r; ++i)
    for (std::int64_t j = 0; j < W / r; ++j)
      for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t di = 0; di < r; ++di)
          for (std::int64_t dj = 0; dj < r; ++dj)
            y.at(i, j, c * rr + di * r + dj) = x.at(r * i + di, r * j + dj, c);
  return y;
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& w) {
  require_rank(w, 2, "linear weight");
  const std::int64_t cin = x.dims().back();
  if (w.dim(0) != cin) {
    throw Error(ErrorCode::kShape, "linear: input has " + std::to_string(cin) +
                                       " channels but weight expects " +
                                       std::to_string(w.dim(0)) + " (" + shape_string(x.dims()) +
                                       " x " + shape_string(w.dims()) + ")");
  }
  const std::int64_t rows = x.size() / cin;
  Shape out_dims = x.dims();
  out_dims.back() = w.dim(1);
  return matmul(x.reshaped({rows, cin}), w).reshaped(std::move(out_dims));
}

template <typename T>
BasicTensor<T> conv1x1(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b) {
  require_hwc(x, "conv1x1");
  return add_bias(linear(x, w), b);
}

template <typename T>
BasicTensor<T> depthwise_conv_down2(const BasicTensor<T>& x, const BasicTensor<T>& w,
                                    const BasicTensor<T>& b) {
  require_hwc(x, "depthwise_conv_down2");
  const std::int64_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  if (H % 2 != 0 || W % 2 != 0) {
    throw Error(ErrorCode::kParity, "depthwise_conv_down2: spatial extents must be even, got " +
                                        shape_string(x.dims()));
  }
  if (w.dims() != Shape{2, 2, C} || b.dims() != Shape{C}) {
    shape_error("depthwise_conv_down2 kernel", x.dims(), w.dims());
  }
  BasicTensor<T> y({H / 2, W / 2, C});
  std::uint64_t macs = 0;
  for (std::int64_t i = 0; i < H / 2; ++i)
    for (std::int64_t j = 0; j < W / 2; ++j)
      for (std::int64_t c = 0; c < C; ++c) {
        T acc = b[c];
        for (std::int64_t di = 0; di < 2; ++di)
          for (std::int64_t dj = 0; dj < 2; ++dj) {
            acc += x.at(2 * i + di, 2 * j + dj, c) * w.at(di, dj, c);
            ++macs;
          }
        y.at(i, j, c) = acc;
      }
  count_macs(macs);
  return y;
}

namespace {

struct Tap {
  std::int64_t lo, hi;
  double w_lo, w_hi;
};

std::vector<Tap> bilinear_taps(std::int64_t in, int factor) {
  std::vector<Tap> taps(static_cast<std::size_t>(in * factor));
  for (std::int64_t o = 0; o < in * factor; ++o) {
    double src = (static_cast<double>(o) + 0.5) / factor - 0.5;
    if (src < 0.0) src = 0.0;
    auto lo = static_cast<std::int64_t>(std::floor(src));
    lo = std::min(lo, in - 1);
    const std::int64_t hi = std::min(lo + 1, in - 1);
    const double frac = src - static_cast<double>(lo);
    taps[o] = {lo, hi, 1.0 - frac, frac};
  }
  return taps;
}

}  // namespace

template <typename T>
BasicTensor<T> upsample_bilinear(const BasicTensor<T>& x, int factor) {
  require_hwc(x, "upsample_bilinear");
  if (factor < 1) throw Error(ErrorCode::kConfig, "upsample_bilinear: factor must be >= 1");
  const std::int64_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  const auto ty = bilinear_taps(H, factor);
  const auto tx = bilinear_taps(W, factor);
  BasicTensor<T> y({H * factor, W * factor, C});
  for (std::int64_t oi = 0; oi < H * factor; ++oi)
    for (std::int64_t oj = 0; oj < W * factor; ++oj) {
      const Tap& a = ty[oi];
      const Tap& b = tx[oj];
      for (std::int64_t c = 0; c < C; ++c) {
        const double v = a.w_lo * (b.w_lo * x.at(a.lo, b.lo, c) + b.w_hi * x.at(a.lo, b.hi, c)) +
                         a.w_hi * (b.w_lo * x.at(a.hi, b.lo, c) + b.w_hi * x.at(a.hi, b.hi, c));
        y.at(oi, oj, c) = static_cast<T>(v);
      }
    }
  return y;
}

template <typename T>
BasicTensor<T> upsample_bilinear_adjoint(const BasicTensor<T>& grad, int factor) {
  require_hwc(grad, "upsample_bilinear_adjoint");
  const std::int64_t Ho = grad.dim(0), Wo = grad.dim(1), C = grad.dim(2);
  if (Ho % factor != 0 || Wo % factor != 0) {
    throw Error(ErrorCode::kShape, "upsample_bilinear_adjoint: extents not divisible by factor");
  }
  const std::int64_t H = Ho / factor, W = Wo / factor;
  const auto ty = bilinear_taps(H, factor);
  const auto tx = bilinear_taps(W, factor);
  BasicTensor<T> gx({H, W, C});
  for (std::int64_t oi = 0; oi < Ho; ++oi)
    for (std::int64_t oj = 0; oj < Wo; ++oj) {
      const Tap& a = ty[oi];
      const Tap& b = tx[oj];
      for (std::int64_t c = 0; c < C; ++c) {
        const double g = grad.at(oi, oj, c);
        gx.at(a.lo, b.lo, c) += static_cast<T>(g * a.w_lo * b.w_lo);
        gx.at(a.lo, b.hi, c) += static_cast<T>(g * a.w_lo * b.w_hi);
        gx.at(a.hi, b.lo, c) += static_cast<T>(g * a.w_hi * b.w_lo);
        gx.at(a.hi, b.hi, c) += static_cast<T>(g * a.w_hi * b.w_hi);
      }
    }
  return gx;
}

template <typename T>
BasicTensor<T> transposed_conv2x2(const BasicTensor<T>& x, const BasicTensor<T>& w,
                                  const BasicTensor<T>& b) {
  require_hwc(x, "transposed_conv2x2");
  require_rank(w, 4, "transposed_conv2x2 kernel");
  const std::int64_t H = x.dim(0), W = x.dim(1), Cin = x.dim(2), Cout = w.dim(3);
  if (w.dim(0) != 2 || w.dim(1) != 2 || w.dim(2) != Cin || b.dims() != Shape{Cout}) {
    shape_error("transposed_conv2x2 kernel", x.dims(), w.dims());
  }
  BasicTensor<T> y({2 * H, 2 * W, Cout});
  std::uint64_t macs = 0;
  for (std::int64_t i = 0; i < H; ++i)
    for (std::int64_t j = 0; j < W; ++j)
      for (std::int64_t di = 0; di < 2; ++di)
        for (std::int64_t dj = 0; dj < 2; ++dj) {
          T* out = &y.at(2 * i + di, 2 * j + dj, 0);
          for (std::int64_t o = 0; o < Cout; ++o) out[o] = b[o];
          for (std::int64_t c = 0; c < Cin; ++c) {
            const T xv = x.at(i, j, c);
            const T* wrow = &w.at(di, dj, c, 0);
            for (std::int64_t o = 0; o < Cout; ++o) out[o] += xv * wrow[o];
            macs += static_cast<std::uint64_t>(Cout);
          }
        }
  count_macs(macs);
  return y;
}

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_hwc(a, "concat_channels lhs");
  require_hwc(b, "concat_channels rhs");
  if (a.dim(0) != b.dim(0) || a.dim(1) != b.dim(1)) {
    shape_error("concat_channels spatial extents", a.dims(), b.dims());
  }
  const std::int64_t pixels = a.dim(0) * a.dim(1), ca = a.dim(2), cb = b.dim(2);
  BasicTensor<T> y({a.dim(0), a.dim(1), ca + cb});
  for (std::int64_t p = 0; p < pixels; ++p) {
    std::copy_n(a.data().data() + p * ca, ca, y.data().data() + p * (ca + cb));
    std::copy_n(b.data().data() + p * cb, cb, y.data().data() + p * (ca + cb) + ca);
  }
  return y;
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.dims() != b.dims()) shape_error("add", a.dims(), b.dims());
  BasicTensor<T> y(a.dims());
  for (std::int64_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
  return y;
}

template <typename T>
BasicTensor<T> add_bias(const BasicTensor<T>& x, const BasicTensor<T>& bias) {
  const std::int64_t C = x.dims().back();
  if (bias.size() != C) shape_error("add_bias", x.dims(), bias.dims());
  BasicTensor<T> y(x.dims());
  for (std::int64_t i = 0; i < x.size(); ++i) y[i] = x[i] + bias[i % C];
  return y;
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, double s) {
  BasicTensor<T> y(x.dims());
  for (std::int64_t i = 0; i < x.size(); ++i) y[i] = static_cast<T>(x[i] * s);
  return y;
}

template <typename T>
BasicTensor<T> sum_to_last(const BasicTensor<T>& x) {
  const std::int64_t C = x.dims().back();
  BasicTensor<T> y({C});
  for (std::int64_t i = 0; i < x.size(); ++i) y[i % C] += x[i];
  return y;
}

template <typename T>
BasicTensor<T> split_heads(const BasicTensor<T>& x, std::int64_t heads) {
  require_rank(x, 3, "split_heads");
  const std::int64_t B = x.dim(0), Tn = x.dim(1), C = x.dim(2);
  if (heads < 1 || C % heads != 0) {
    throw Error(ErrorCode::kConfig, "split_heads: channels " + std::to_string(C) +
                                        " not divisible by heads " + std::to_string(heads));
  }
  const std::int64_t d = C / heads;
  BasicTensor<T> y({B * heads, Tn, d});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t t = 0; t < Tn; ++t)
      for (std::int64_t h = 0; h < heads; ++h)
        std::copy_n(&x.at(b, t, h * d), d, &y.at(b * heads + h, t, 0));
  return y;
}

template <typename T>
BasicTensor<T> merge_heads(const BasicTensor<T>& x, std::int64_t heads) {
  require_rank(x, 3, "merge_heads");
  if (heads < 1 || x.dim(0) % heads != 0) {
    throw Error(ErrorCode::kConfig, "merge_heads: leading extent not divisible by heads");
  }
  const std::int64_t B = x.dim(0) / heads, Tn = x.dim(1), d = x.dim(2);
  BasicTensor<T> y({B, Tn, heads * d});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t t = 0; t < Tn; ++t)
      for (std::int64_t h = 0; h < heads; ++h)
        std::copy_n(&x.at(b * heads + h, t, 0), d, &y.at(b, t, h * d));
  return y;
}

#define MUSTER_INSTANTIATE_KERNELS(T)                                                            \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                  \
  template BasicTensor<T> batched_matmul(const BasicTensor<T>&, const BasicTensor<T>&, bool,     \
                                         bool);                                                  \
  template BasicTensor<T> softmax_rows(const BasicTensor<T>&);                                   \
  template BasicTensor<T> layer_norm(const BasicTensor<T>&, const BasicTensor<T>&,               \
                                     const BasicTensor<T>&, double);                             \
  template BasicTensor<T> gelu(const BasicTensor<T>&);                                           \
  template BasicTensor<T> gelu_derivative(const BasicTensor<T>&);                                \
  template BasicTensor<T> pixel_shuffle(const BasicTensor<T>&, int);                             \
  template BasicTensor<T> pixel_unshuffle(const BasicTensor<T>&, int);                           \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&);                  \
  template BasicTensor<T> conv1x1(const BasicTensor<T>&, const BasicTensor<T>&,                  \
                                  const BasicTensor<T>&);                                        \
  template BasicTensor<T> depthwise_conv_down2(const BasicTensor<T>&, const BasicTensor<T>&,     \
                                               const BasicTensor<T>&);                           \
  template BasicTensor<T> upsample_bilinear(const BasicTensor<T>&, int);                         \
  template BasicTensor<T> upsample_bilinear_adjoint(const BasicTensor<T>&, int);                 \
  template BasicTensor<T> transposed_conv2x2(const BasicTensor<T>&, const BasicTensor<T>&,       \
                                             const BasicTensor<T>&);                             \
  template BasicTensor<T> concat_channels(const BasicTensor<T>&, const BasicTensor<T>&);         \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                     \
  template BasicTensor<T> add_bias(const BasicTensor<T>&, const BasicTensor<T>&);                \
  template BasicTensor<T> scale(const BasicTensor<T>&, double);                                  \
  template BasicTensor<T> sum_to_last(const BasicTensor<T>&);                                    \
  template BasicTensor<T> split_heads(const BasicTensor<T>&, std::int64_t);                      \
  template BasicTensor<T> merge_heads(const BasicTensor<T>&, std::int64_t);

MUSTER_INSTANTIATE_KERNELS(float)
MUSTER_INSTANTIATE_KERNELS(double)

#undef MUSTER_INSTANTIATE_KERNELS

}  // namespace muster
