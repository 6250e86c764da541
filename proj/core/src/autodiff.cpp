// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0

#include "muster/autodiff.hpp"

#include <cmath>
#include <optional>

#include "muster/kernels.hpp"
#include "muster/windowing.hpp"

namespace muster {

const char* op_name(Op op) noexcept {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kAddBias: return "add_bias";
    case Op::kScale: return "scale";
    case Op::kMatmul: return "matmul";
    case Op::kBatchedMatmul: return "batched_matmul";
    case Op::kLinear: return "linear";
    case Op::kSoftmax: return "softmax_rows";
    case Op::kLayerNorm: return "layer_norm";
    case Op::kGelu: return "gelu";
    case Op::kPixelShuffle: return "pixel_shuffle";
    case Op::kDepthwiseDown2: return "depthwise_conv_down2";
    case Op::kUpsampleBilinear: return "upsample_bilinear";
    case Op::kTransposedConv2x2: return "transposed_conv2x2";
    case Op::kConcatChannels: return "concat_channels";
    case Op::kPad: return "pad_hw";
    case Op::kCrop: return "crop_hw";
    case Op::kCyclicShift: return "cyclic_shift";
    case Op::kWindowPartition: return "window_partition";
    case Op::kWindowReverse: return "window_reverse";
    case Op::kSplitHeads: return "split_heads";
    case Op::kMergeHeads: return "merge_heads";
    case Op::kAddHeadBias: return "add_head_bias";
    case Op::kAddConstant: return "add_constant";
    case Op::kGatherRelPos: return "gather_rel_pos";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kWeightedSum: return "weighted_sum";
    case Op::kCount: break;
  }
  return "unknown";
}

namespace {

template <typename T>
BasicTensor<T> transpose2d(const BasicTensor<T>& x) {
  const std::int64_t r = x.dim(0), c = x.dim(1);
  BasicTensor<T> y({c, r});
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) y.at(j, i) = x.at(i, j);
  return y;
}

template <typename T>
const BasicTensor<T>& input(const Tape<T>& tape, const TapeNode<T>& n, int slot) {
  return tape.value(Var{n.inputs[static_cast<std::size_t>(slot)]});
}

template <typename T>
void send(GradSink<T>& sink, const TapeNode<T>& n, int slot, BasicTensor<T> g) {
  sink.accumulate(n.inputs[static_cast<std::size_t>(slot)], std::move(g));
}

// ---- adjoints ----

template <typename T>
void adj_add(const Tape<T>&, const TapeNode<T>& n, const BasicTensor<T>& g, GradSink<T>& s) {
  send(s, n, 0, g);
  send(s, n, 1, g);
}

template <typename T>
void adj_add_bias(const Tape<T>&, const TapeNode<T>& n, const BasicTensor<T>& g,
                  GradSink<T>& s) {
  send(s, n, 0, g);
  send(s, n, 1, sum_to_last(g));
}

template <typename T>
void adj_scale(const Tape<T>&, const TapeNode<T>& n, const BasicTensor<T>& g, GradSink<T>& s) {
  send(s, n, 0, scale(g, n.fattr));
}

template <typename T>
void adj_matmul(const Tape<T>& t, const TapeNode<T>& n, const BasicTensor<T>& g,
                GradSink<T>& s) {
  const auto& a = input(t, n, 0);
  const auto& b = input(t, n, 1);
  send(s, n, 0, matmul(g, transpose2d(b)));
  send(s, n, 1, matmul(transpose2d(a), g));
}

template <typename T>
void adj_batched_matmul(const Tape<T>& t, const TapeNode<T>& n, const BasicTensor<T>& g,
                        GradSink<T>& s) {
  const auto& a = input(t, n, 0);
  const auto& b = input(t, n, 1);
  const bool ta = n.iattr[0] != 0, tb = n.iattr[1] != 0;
  if (tb) {
    send(s, n, 0, batched_matmul(g, b));
    send(s, n, 1, batched_matmul(g, a, true, false));
  } else if (ta) {
    send(s, n, 0, batched_matmul(b, g, false, true));
    send(s, n, 1, batched_matmul(a, g));
  } else {
    send(s, n, 0, batched_matmul(g, b, false, true));
    send(s, n, 1, batched_matmul(a, g, true, false));
  }
}

template <typename T>
void adj_linear(const Tape<T>& t, const TapeNode<T>& n, const BasicTensor<T>& g,
                GradSink<T>& s) {
  const auto& x = input(t, n, 0);
  const auto& w = input(t, n, 1);
  const std::int64_t cin = w.dim(0), cout = w.dim(1);
  const std::int64_t rows = x.size() / cin;
  send(s, n, 0, linear(g, transpose2d(w)));
  send(s, n, 1, matmul(transpose2d(x.reshaped({rows, cin})), g.reshaped({rows, cout})));
}

template <typename T>
void adj_softmax(const Tape<T>&, const TapeNode<T>& n, const BasicTensor<T>& g,
                 GradSink<T>& s) {
  const auto& y = n.value;
  const std::int64_t cols = y.dims().back(), rows = y.size() / cols;
  BasicTensor<T> gx(y.dims());
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* yr = y.data().data() + r * cols;
    const T* gr = g.data().data() + r * cols;
    T* out = gx.data().data() + r * cols;
    double dot = 0.0;
    for (std::int64_t c = 0; c < cols; ++c) dot += static_cast<double>(yr[c]) * gr[c];
    // Masked entries have y == 0 exactly, so their adjoint is exactly 0.
    for (std::int64_t c = 0; c < cols; ++c) out[c] = static_cast<T>(yr[c] * (gr[c] - dot));
  }
  send(s, n, 0, std::move(gx));
}

template <typename T>
void adj_layer_norm(const Tape<T>& t, const TapeNode<T>& n, const BasicTensor<T>& g,
                    GradSink<T>& s) {
  const auto& x = input(t, n, 0);
  const auto& gamma = input(t, n, 1);
  const std::int64_t C = x.dims().back(), tokens = x.size() / C;
  const double eps = n.fattr;
  BasicTensor<T> gx(x.dims());
  BasicTensor<T> ggamma({C});
  BasicTensor<T> gbeta({C});
  std::vector<double> xhat(static_cast<std::size_t>(C)), gxhat(static_cast<std::size_t>(C));
  for (std::int64_t tk = 0; tk < tokens; ++tk) {
    const T* in = x.data().data() + tk * C;
    const T* gr = g.data().data() + tk * C;
    double mean = 0.0;
    for (std::int64_t c = 0; c < C; ++c) mean += in[c];
    mean /= static_cast<double>(C);
    double var = 0.0;
    for (std::int64_t c = 0; c < C; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= static_cast<double>(C);
    const double rstd = 1.0 / std::sqrt(var + eps);
    double m1 = 0.0, m2 = 0.0;
    for (std::int64_t c = 0; c < C; ++c) {
      xhat[c] = (in[c] - mean) * rstd;
      gxhat[c] = static_cast<double>(gr[c]) * gamma[c];
      m1 += gxhat[c];
      m2 += gxhat[c] * xhat[c];
      ggamma[c] += static_cast<T>(gr[c] * xhat[c]);
      gbeta[c] += gr[c];
    }
    m1 /= static_cast<double>(C);
    m2 /= static_cast<double>(C);
    T* out = gx.data().data() + tk * C;
    for (std::int64_t c = 0; c < C; ++c) {
      out[c] = static_cast<T>(rstd * (gxhat[c] - m1 - xhat[c] * m2));
    }
  }
  send(s, n, 0, std::move(gx));
  send(s, n, 1, std::move(ggamma));
  send(s, n, 2, std::move(gbeta));
}

template <typename T>
void adj_gelu(const Tape<T>& t, const TapeNode<T>& n, const BasicTensor<T>& g, GradSink<T>& s) {
  auto d = gelu_derivative(input(t, n, 0));
  for (std::int64_t i = 0; i < d.size(); ++i) d[i] *= g[i];
  send(s, n, 0, std::move(d));
}

template <typename T>
void adj_pixel_shuffle(const Tape<T>&, const TapeNode<T>& n, const BasicTensor<T>& g,
                       GradSink<T>& s) {
  send(s, n, 0, pixel_unshuffle(g, static_cast<int>(n.iattr[0])));
}

template <typename T>
void adj_depthwise(const Tape<T>& t, const TapeNode<T>& n, const BasicTensor<T>& g,
                   GradSink<T>& s) {
  const auto& x = input(t, n, 0);
  const auto& w = input(t, n, 1);
  const std::int64_t Ho = g.dim(0), Wo = g.dim(1), C = g.dim(2);
  BasicTensor<T> gx(x.dims());
  BasicTensor<T> gw(w.dims());
  BasicTensor<T> gb({C});
  for (std::int64_t i = 0; i < Ho; ++i)
    for (std::int64_t j = 0; j < Wo; ++j)
      for (std::int64_t c = 0; c < C; ++c) {
        const T gv = g.at(i, j, c);
        gb[c] += gv;
        for (std::int64_t di = 0; di < 2; ++di)
          for (std::int64_t dj = 0; dj < 2; ++dj) {
            gx.at(2 * i + di, 2 * j + dj, c) += gv * w.at(di, dj, c);
            gw.at(di, dj, c) += gv * x.at(2 * i + di, 2 * j + dj, c);
          }
      }
  send(s, n, 0, std::move(gx));
  send(s, n, 1, std::move(gw));
  send(s, n, 2, std::move(gb));
}

template <typename T>
void adj_upsample(const Tape<T>&, const TapeNode<T>& n, const BasicTensor<T>& g,
                  GradSink<T>& s) {
  send(s, n, 0, upsample_bilinear_adjoint(g, static_cast<int>(n.iattr[0])));
}

template <typename T>
void adj_transposed_conv(const Tape<T>& t, const TapeNode<T>& n, const BasicTensor<T>& g,
                         GradSink<T>& s) {
  const auto& x = input(t, n, 0);
  const auto& w = input(t, n, 1);
  const std::int64_t H = x.dim(0), W = x.dim(1), Cin = x.dim(2), Cout = w.dim(3);
  BasicTensor<T> gx(x.dims());
  BasicTensor<T> gw(w.dims());
  for (std::int64_t i = 0; i < H; ++i)
    for (std::int64_t j = 0; j < W; ++j)
      for (std::int64_t di = 0; di < 2; ++di)
        for (std::int64_t dj = 0; dj < 2; ++dj) {
          const T* gr = &g.at(2 * i + di, 2 * j + dj, 0);
          for (std::int64_t c = 0; c < Cin; ++c) {
            const T* wr = &w.at(di, dj, c, 0);
            T* gwr = &gw.at(di, dj, c, 0);
            const T xv = x.at(i, j, c);
            T acc = 0;
            for (std::int64_t o = 0; o < Cout; ++o) {
              acc += gr[o] * wr[o];
              gwr[o] += xv * gr[o];
            }
            gx.at(i, j, c) += acc;
          }
        }
  send(s, n, 0, std::move(gx));
  send(s, n, 1, std::move(gw));
  send(s, n, 2, sum_to_last(g));
}

template <typename T>
void adj_concat(const Tape<T>& t, const TapeNode<T>& n, const BasicTensor<T>& g,
                GradSink<T>& s) {
  const std::int64_t ca = input(t, n, 0).dim(2), cb = input(t, n, 1).dim(2);
  const std::int64_t H = g.dim(0), W = g.dim(1);
  BasicTensor<T> ga({H, W, ca});
  BasicTensor<T> gb({H, W, cb});
  for (std::int64_t p = 0; p < H * W; ++p) {
    std::copy_n(g.data().data() + p * (ca + cb), ca, ga.data().data() + p * ca);
    std::copy_n(g.data().data() + p * (ca + cb) + ca, cb, gb.data().data() + p * cb);
  }
  send(s, n, 0, std::move(ga));
  send(s, n, 1, std::move(gb));
}

template <typename T>
void adj_pad(const Tape<T>& t, const TapeNode<T>& n, const BasicTensor<T>& g, GradSink<T>& s) {
  const auto& x = input(t, n, 0);
  send(s, n, 0, crop_hw(g, x.dim(0), x.dim(1)));
}

template <typename T>
void adj_crop(const Tape<T>& t, const TapeNode<T>& n, const BasicTensor<T>& g, GradSink<T>& s) {
  const auto& x = input(t, n, 0);
  send(s, n, 0, pad_hw(g, x.dim(0), x.dim(1)));
}

template <typename T>
void adj_cyclic_shift(const Tape<T>&, const TapeNode<T>& n, const BasicTensor<T>& g,
                      GradSink<T>& s) {
  send(s, n, 0, cyclic_shift(g, -n.iattr[0]));
}

template <typename T>
void adj_window_partition(const Tape<T>& t, const TapeNode<T>& n, const BasicTensor<T>& g,
                          GradSink<T>& s) {
  const auto& x = input(t, n, 0);
  send(s, n, 0, window_reverse(g, n.iattr[0], x.dim(0), x.dim(1)));
}

template <typename T>
void adj_window_reverse(const Tape<T>&, const TapeNode<T>& n, const BasicTensor<T>& g,
                        GradSink<T>& s) {
  send(s, n, 0, window_partition(g, n.iattr[0]));
}

template <typename T>
void adj_split_heads(const Tape<T>&, const TapeNode<T>& n, const BasicTensor<T>& g,
                     GradSink<T>& s) {
  send(s, n, 0, merge_heads(g, n.iattr[0]));
}

template <typename T>
void adj_merge_heads(const Tape<T>&, const TapeNode<T>& n, const BasicTensor<T>& g,
                     GradSink<T>& s) {
  send(s, n, 0, split_heads(g, n.iattr[0]));
}

template <typename T>
void adj_add_head_bias(const Tape<T>& t, const TapeNode<T>& n, const BasicTensor<T>& g,
                       GradSink<T>& s) {
  const auto& bias = input(t, n, 1);
  const std::int64_t heads = bias.dim(0), block = bias.size() / heads;
  BasicTensor<T> gbias(bias.dims());
  const std::int64_t batches = g.dim(0);
  for (std::int64_t b = 0; b < batches; ++b) {
    const T* src = &g.at(b, 0, 0);
    T* dst = gbias.data().data() + (b % heads) * block;
    for (std::int64_t i = 0; i < block; ++i) dst[i] += src[i];
  }
  send(s, n, 0, g);
  send(s, n, 1, std::move(gbias));
}

template <typename T>
void adj_add_constant(const Tape<T>&, const TapeNode<T>& n, const BasicTensor<T>& g,
                      GradSink<T>& s) {
  send(s, n, 0, g);
}

template <typename T>
void adj_gather_rel_pos(const Tape<T>& t, const TapeNode<T>& n, const BasicTensor<T>& g,
                        GradSink<T>& s) {
  const auto& table = input(t, n, 0);
  const std::int64_t heads = table.dim(1), pairs = static_cast<std::int64_t>(n.index->size());
  BasicTensor<T> gt(table.dims());
  for (std::int64_t h = 0; h < heads; ++h)
    for (std::int64_t p = 0; p < pairs; ++p)
      gt.at((*n.index)[static_cast<std::size_t>(p)], h) += g[h * pairs + p];
  send(s, n, 0, std::move(gt));
}

template <typename T>
void adj_sum(const Tape<T>& t, const TapeNode<T>& n, const BasicTensor<T>& g, GradSink<T>& s) {
  send(s, n, 0, BasicTensor<T>::full(input(t, n, 0).dims(), g[0]));
}

template <typename T>
void adj_mean(const Tape<T>& t, const TapeNode<T>& n, const BasicTensor<T>& g, GradSink<T>& s) {
  const auto& x = input(t, n, 0);
  send(s, n, 0, BasicTensor<T>::full(x.dims(), static_cast<T>(g[0] / static_cast<double>(x.size()))));
}

template <typename T>
void adj_weighted_sum(const Tape<T>&, const TapeNode<T>& n, const BasicTensor<T>& g,
                      GradSink<T>& s) {
  send(s, n, 0, scale(*n.constant, static_cast<double>(g[0])));
}

}  // namespace

template <typename T>
const AdjointTable<T>& AdjointTable<T>::standard() {
  static const AdjointTable table = [] {
    AdjointTable t;
    t.set(Op::kAdd, &adj_add<T>);
    t.set(Op::kAddBias, &adj_add_bias<T>);
    t.set(Op::kScale, &adj_scale<T>);
    t.set(Op::kMatmul, &adj_matmul<T>);
    t.set(Op::kBatchedMatmul, &adj_batched_matmul<T>);
    t.set(Op::kLinear, &adj_linear<T>);
    t.set(Op::kSoftmax, &adj_softmax<T>);
    t.set(Op::kLayerNorm, &adj_layer_norm<T>);
    t.set(Op::kGelu, &adj_gelu<T>);
    t.set(Op::kPixelShuffle, &adj_pixel_shuffle<T>);
    t.set(Op::kDepthwiseDown2, &adj_depthwise<T>);
    t.set(Op::kUpsampleBilinear, &adj_upsample<T>);
    t.set(Op::kTransposedConv2x2, &adj_transposed_conv<T>);
    t.set(Op::kConcatChannels, &adj_concat<T>);
    t.set(Op::kPad, &adj_pad<T>);
    t.set(Op::kCrop, &adj_crop<T>);
    t.set(Op::kCyclicShift, &adj_cyclic_shift<T>);
    t.set(Op::kWindowPartition, &adj_window_partition<T>);
    t.set(Op::kWindowReverse, &adj_window_reverse<T>);
    t.set(Op::kSplitHeads, &adj_split_heads<T>);
    t.set(Op::kMergeHeads, &adj_merge_heads<T>);
    t.set(Op::kAddHeadBias, &adj_add_head_bias<T>);
    t.set(Op::kAddConstant, &adj_add_constant<T>);
    t.set(Op::kGatherRelPos, &adj_gather_rel_pos<T>);
    t.set(Op::kSum, &adj_sum<T>);
    t.set(Op::kMean, &adj_mean<T>);
    t.set(Op::kWeightedSum, &adj_weighted_sum<T>);
    return t;
  }();
  return table;
}

template <typename T>
const TapeNode<T>& Tape<T>::node(Var v) const {
  if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw Error(ErrorCode::kValidation, "tape: invalid node handle " + std::to_string(v.id));
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

template <typename T>
Var Tape<T>::record(TapeNode<T> n) {
  if (n.op != Op::kLeaf && !adjoints_->has(n.op)) {
    throw Error(ErrorCode::kMissingAdjoint,
                std::string("no adjoint registered for op '") + op_name(n.op) + "'");
  }
  for (auto in : n.inputs) {
    if (in >= static_cast<std::int32_t>(nodes_.size())) {
      throw Error(ErrorCode::kValidation, "tape: input recorded after its consumer");
    }
  }
  debug_check_finite(n.value, op_name(n.op));
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Tape<T>::constant(TensorT value) {
  TapeNode<T> n;
  n.value = std::move(value);
  return record(std::move(n));
}

template <typename T>
Var Tape<T>::parameter(const std::string& name, TensorT value) {
  if (name.empty()) throw Error(ErrorCode::kValidation, "tape: parameter needs a name");
  if (!parameter_names_.insert(name).second) {
    throw Error(ErrorCode::kValidation, "tape: duplicate parameter '" + name + "'");
  }
  TapeNode<T> n;
  n.value = std::move(value);
  n.name = name;
  return record(std::move(n));
}

namespace {

template <typename T>
TapeNode<T> make_node(Op op, BasicTensor<T> value, std::initializer_list<Var> in) {
  TapeNode<T> n;
  n.op = op;
  n.value = std::move(value);
  std::size_t i = 0;
  for (Var v : in) n.inputs[i++] = v.id;
  return n;
}

}  // namespace

template <typename T>
Var Tape<T>::add(Var a, Var b) {
  return record(make_node(Op::kAdd, muster::add(val(a), val(b)), {a, b}));
}

template <typename T>
Var Tape<T>::add_bias(Var x, Var bias) {
  return record(make_node(Op::kAddBias, muster::add_bias(val(x), val(bias)), {x, bias}));
}

template <typename T>
Var Tape<T>::scale(Var x, double s) {
  auto n = make_node(Op::kScale, muster::scale(val(x), s), {x});
  n.fattr = s;
  return record(std::move(n));
}

template <typename T>
Var Tape<T>::matmul(Var a, Var b) {
  return record(make_node(Op::kMatmul, muster::matmul(val(a), val(b)), {a, b}));
}

template <typename T>
Var Tape<T>::batched_matmul(Var a, Var b, bool transpose_a, bool transpose_b) {
  auto n = make_node(Op::kBatchedMatmul,
                     muster::batched_matmul(val(a), val(b), transpose_a, transpose_b), {a, b});
  n.iattr = {transpose_a ? 1 : 0, transpose_b ? 1 : 0, 0, 0};
  return record(std::move(n));
}

template <typename T>
Var Tape<T>::linear(Var x, Var w) {
  return record(make_node(Op::kLinear, muster::linear(val(x), val(w)), {x, w}));
}

template <typename T>
Var Tape<T>::softmax_rows(Var x) {
  return record(make_node(Op::kSoftmax, muster::softmax_rows(val(x)), {x}));
}

template <typename T>
Var Tape<T>::layer_norm(Var x, Var gamma, Var beta, double eps) {
  auto n = make_node(Op::kLayerNorm, muster::layer_norm(val(x), val(gamma), val(beta), eps),
                     {x, gamma, beta});
  n.fattr = eps;
  return record(std::move(n));
}

template <typename T>
Var Tape<T>::gelu(Var x) {
  return record(make_node(Op::kGelu, muster::gelu(val(x)), {x}));
}

template <typename T>
Var Tape<T>::pixel_shuffle(Var x, int r) {
  auto n = make_node(Op::kPixelShuffle, muster::pixel_shuffle(val(x), r), {x});
  n.iattr[0] = r;
  return record(std::move(n));
}

template <typename T>
Var Tape<T>::depthwise_conv_down2(Var x, Var w, Var b) {
  return record(make_node(Op::kDepthwiseDown2,
                          muster::depthwise_conv_down2(val(x), val(w), val(b)), {x, w, b}));
}

template <typename T>
Var Tape<T>::upsample_bilinear(Var x, int factor) {
  auto n = make_node(Op::kUpsampleBilinear, muster::upsample_bilinear(val(x), factor), {x});
  n.iattr[0] = factor;
  return record(std::move(n));
}

template <typename T>
Var Tape<T>::transposed_conv2x2(Var x, Var w, Var b) {
  return record(make_node(Op::kTransposedConv2x2,
                          muster::transposed_conv2x2(val(x), val(w), val(b)), {x, w, b}));
}

template <typename T>
Var Tape<T>::concat_channels(Var a, Var b) {
  return record(make_node(Op::kConcatChannels, muster::concat_channels(val(a), val(b)), {a, b}));
}

template <typename T>
Var Tape<T>::pad_hw(Var x, std::int64_t height, std::int64_t width) {
  return record(make_node(Op::kPad, muster::pad_hw(val(x), height, width), {x}));
}

template <typename T>
Var Tape<T>::crop_hw(Var x, std::int64_t height, std::int64_t width) {
  return record(make_node(Op::kCrop, muster::crop_hw(val(x), height, width), {x}));
}

template <typename T>
Var Tape<T>::cyclic_shift(Var x, std::int64_t s) {
  auto n = make_node(Op::kCyclicShift, muster::cyclic_shift(val(x), s), {x});
  n.iattr[0] = s;
  return record(std::move(n));
}

template <typename T>
Var Tape<T>::window_partition(Var x, std::int64_t window) {
  auto n = make_node(Op::kWindowPartition, muster::window_partition(val(x), window), {x});
  n.iattr[0] = window;
  return record(std::move(n));
}

template <typename T>
Var Tape<T>::window_reverse(Var x, std::int64_t window, std::int64_t height, std::int64_t width) {
  auto n = make_node(Op::kWindowReverse, muster::window_reverse(val(x), window, height, width),
                     {x});
  n.iattr[0] = window;
  return record(std::move(n));
}

template <typename T>
Var Tape<T>::split_heads(Var x, std::int64_t heads) {
  auto n = make_node(Op::kSplitHeads, muster::split_heads(val(x), heads), {x});
  n.iattr[0] = heads;
  return record(std::move(n));
}

template <typename T>
Var Tape<T>::merge_heads(Var x, std::int64_t heads) {
  auto n = make_node(Op::kMergeHeads, muster::merge_heads(val(x), heads), {x});
  n.iattr[0] = heads;
  return record(std::move(n));
}

template <typename T>
Var Tape<T>::add_head_bias(Var logits, Var bias) {
  const auto& l = val(logits);
  const auto& b = val(bias);
  require_rank(l, 3, "add_head_bias logits");
  require_rank(b, 3, "add_head_bias bias");
  const std::int64_t heads = b.dim(0);
  if (l.dim(0) % heads != 0 || l.dim(1) != b.dim(1) || l.dim(2) != b.dim(2)) {
    throw Error(ErrorCode::kShape,
                "add_head_bias: " + shape_string(l.dims()) + " vs " + shape_string(b.dims()));
  }
  TensorT out = l;
  const std::int64_t block = b.size() / heads;
  for (std::int64_t i = 0; i < l.dim(0); ++i) {
    T* dst = &out.at(i, 0, 0);
    const T* src = b.data().data() + (i % heads) * block;
    for (std::int64_t j = 0; j < block; ++j) dst[j] += src[j];
  }
  return record(make_node(Op::kAddHeadBias, std::move(out), {logits, bias}));
}

template <typename T>
Var Tape<T>::add_constant(Var x, std::shared_ptr<const TensorT> c) {
  auto n = make_node(Op::kAddConstant, muster::add(val(x), *c), {x});
  n.constant = std::move(c);
  return record(std::move(n));
}

template <typename T>
Var Tape<T>::gather_rel_pos(Var table, std::shared_ptr<const std::vector<std::int64_t>> index,
                            std::int64_t tokens) {
  const auto& tb = val(table);
  require_rank(tb, 2, "gather_rel_pos table");
  if (static_cast<std::int64_t>(index->size()) != tokens * tokens) {
    throw Error(ErrorCode::kShape, "gather_rel_pos: index size does not match token count");
  }
  const std::int64_t heads = tb.dim(1), pairs = tokens * tokens;
  TensorT out({heads, tokens, tokens});
  for (std::int64_t h = 0; h < heads; ++h)
    for (std::int64_t p = 0; p < pairs; ++p)
      out[h * pairs + p] = tb.at((*index)[static_cast<std::size_t>(p)], h);
  auto n = make_node(Op::kGatherRelPos, std::move(out), {table});
  n.index = std::move(index);
  return record(std::move(n));
}

template <typename T>
Var Tape<T>::sum(Var x) {
  double acc = 0.0;
  for (T v : val(x).data()) acc += v;
  return record(make_node(Op::kSum, TensorT({1}, {static_cast<T>(acc)}), {x}));
}

template <typename T>
Var Tape<T>::mean(Var x) {
  double acc = 0.0;
  for (T v : val(x).data()) acc += v;
  acc /= static_cast<double>(val(x).size());
  return record(make_node(Op::kMean, TensorT({1}, {static_cast<T>(acc)}), {x}));
}

template <typename T>
Var Tape<T>::weighted_sum(Var x, std::shared_ptr<const TensorT> weights) {
  const auto& xv = val(x);
  if (weights->dims() != xv.dims()) {
    throw Error(ErrorCode::kShape, "weighted_sum: " + shape_string(xv.dims()) + " vs " +
                                       shape_string(weights->dims()));
  }
  double acc = 0.0;
  for (std::int64_t i = 0; i < xv.size(); ++i) acc += static_cast<double>(xv[i]) * (*weights)[i];
  auto n = make_node(Op::kWeightedSum, TensorT({1}, {static_cast<T>(acc)}), {x});
  n.constant = std::move(weights);
  return record(std::move(n));
}

namespace {

template <typename T>
class VectorSink final : public GradSink<T> {
 public:
  explicit VectorSink(std::vector<std::optional<BasicTensor<T>>>& grads) : grads_(grads) {}

  void accumulate(std::int32_t node, BasicTensor<T> grad) override {
    auto& slot = grads_[static_cast<std::size_t>(node)];
    if (!slot) {
      slot = std::move(grad);
      return;
    }
    if (slot->dims() != grad.dims()) {
      throw Error(ErrorCode::kShape, "adjoint extent mismatch at node " + std::to_string(node));
    }
    for (std::int64_t i = 0; i < grad.size(); ++i) (*slot)[i] += grad[i];
  }

 private:
  std::vector<std::optional<BasicTensor<T>>>& grads_;
};

}  // namespace

template <typename T>
Gradients<T> Tape<T>::backward(Var loss) const {
  const auto& l = node(loss);
  if (l.value.size() != 1) {
    throw Error(ErrorCode::kRank, "backward: loss must be scalar, got " +
                                      shape_string(l.value.dims()));
  }
  std::vector<std::optional<TensorT>> grads(nodes_.size());
  grads[static_cast<std::size_t>(loss.id)] = TensorT::full(l.value.dims(), T{1});
  VectorSink<T> sink(grads);
  for (std::int32_t i = loss.id; i >= 0; --i) {
    const auto& n = nodes_[static_cast<std::size_t>(i)];
    auto& g = grads[static_cast<std::size_t>(i)];
    if (!g || n.op == Op::kLeaf) continue;
    adjoints_->get(n.op)(*this, n, *g, sink);
    if (n.name.empty()) g.reset();  // intermediate adjoints are no longer needed
  }
  Gradients<T> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    if (n.name.empty()) continue;
    out.emplace(n.name, grads[i] ? std::move(*grads[i]) : TensorT(n.value.dims()));
  }
  return out;
}

template class AdjointTable<float>;
template class AdjointTable<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace muster
