// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode differentiation over the kernels in kernels.hpp and
// windowing.hpp. A Tape records nodes in execution order; backward() walks
// them in reverse and accumulates adjoints additively at fan-out.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "muster/tensor.hpp"

namespace muster {

enum class Op : std::uint8_t {
  kLeaf,
  kAdd,
  kAddBias,
  kScale,
  kMatmul,
  kBatchedMatmul,
  kLinear,
  kSoftmax,
  kLayerNorm,
  kGelu,
  kPixelShuffle,
  kDepthwiseDown2,
  kUpsampleBilinear,
  kTransposedConv2x2,
  kConcatChannels,
  kPad,
  kCrop,
  kCyclicShift,
  kWindowPartition,
  kWindowReverse,
  kSplitHeads,
  kMergeHeads,
  kAddHeadBias,
  kAddConstant,
  kGatherRelPos,
  kSum,
  kMean,
  kWeightedSum,
  kCount,
};

inline constexpr std::size_t kOpCount = static_cast<std::size_t>(Op::kCount);

const char* op_name(Op op) noexcept;

/// Handle to a tape node.
struct Var {
  std::int32_t id = -1;
  bool valid() const noexcept { return id >= 0; }
};

template <typename T>
class Tape;

template <typename T>
struct TapeNode {
  Op op = Op::kLeaf;
  std::array<std::int32_t, 3> inputs{-1, -1, -1};
  BasicTensor<T> value;
  std::array<std::int64_t, 4> iattr{};
  double fattr = 0.0;
  std::shared_ptr<const BasicTensor<T>> constant;          // add_constant / weighted_sum
  std::shared_ptr<const std::vector<std::int64_t>> index;  // gather_rel_pos
  std::string name;                                        // parameters only
};

/// Receives adjoint contributions during backward().
template <typename T>
class GradSink {
 public:
  virtual ~GradSink() = default;
  virtual void accumulate(std::int32_t node, BasicTensor<T> grad) = 0;
};

template <typename T>
using AdjointFn = void (*)(const Tape<T>& tape, const TapeNode<T>& node,
                           const BasicTensor<T>& grad, GradSink<T>& sink);

/// Op -> adjoint registry. Recording an op without a registered adjoint
/// fails immediately, at tape-build time.
template <typename T>
class AdjointTable {
 public:
  static const AdjointTable& standard();

  void set(Op op, AdjointFn<T> fn) { fns_[static_cast<std::size_t>(op)] = fn; }
  AdjointFn<T> get(Op op) const { return fns_[static_cast<std::size_t>(op)]; }
  bool has(Op op) const { return get(op) != nullptr; }

 private:
  std::array<AdjointFn<T>, kOpCount> fns_{};
};

template <typename T>
using Gradients = std::map<std::string, BasicTensor<T>>;

template <typename T>
class Tape {
 public:
  using TensorT = BasicTensor<T>;

  explicit Tape(const AdjointTable<T>& adjoints = AdjointTable<T>::standard())
      : adjoints_(&adjoints) {}

  Var constant(TensorT value);
  /// Named differentiable leaf. Names must be unique per tape.
  Var parameter(const std::string& name, TensorT value);

  const TensorT& value(Var v) const { return node(v).value; }
  const TapeNode<T>& node(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  Var add(Var a, Var b);
  Var add_bias(Var x, Var bias);
  Var scale(Var x, double s);
  Var matmul(Var a, Var b);
  Var batched_matmul(Var a, Var b, bool transpose_a = false, bool transpose_b = false);
  Var linear(Var x, Var w);
  Var conv1x1(Var x, Var w, Var b) { return add_bias(linear(x, w), b); }
  Var softmax_rows(Var x);
  Var layer_norm(Var x, Var gamma, Var beta, double eps);
  Var gelu(Var x);
  Var pixel_shuffle(Var x, int r);
  Var depthwise_conv_down2(Var x, Var w, Var b);
  Var upsample_bilinear(Var x, int factor);
  Var transposed_conv2x2(Var x, Var w, Var b);
  Var concat_channels(Var a, Var b);
  Var pad_hw(Var x, std::int64_t height, std::int64_t width);
  Var crop_hw(Var x, std::int64_t height, std::int64_t width);
  Var cyclic_shift(Var x, std::int64_t s);
  Var window_partition(Var x, std::int64_t window);
  Var window_reverse(Var x, std::int64_t window, std::int64_t height, std::int64_t width);
  Var split_heads(Var x, std::int64_t heads);
  Var merge_heads(Var x, std::int64_t heads);
  /// logits [B*heads, Tq, Tk] + bias [heads, Tq, Tk], broadcast over B.
  Var add_head_bias(Var logits, Var bias);
  /// x + c for a non-differentiable tensor c of the same extents.
  Var add_constant(Var x, std::shared_ptr<const TensorT> c);
  /// table [(2M-1)^2, heads] gathered through index [M^2 * M^2] into [heads, M^2, M^2].
  Var gather_rel_pos(Var table, std::shared_ptr<const std::vector<std::int64_t>> index,
                     std::int64_t tokens);
  Var sum(Var x);
  Var mean(Var x);
  /// sum_i w_i * x_i for a constant weight tensor w.
  Var weighted_sum(Var x, std::shared_ptr<const TensorT> weights);

  /// d(loss)/d(parameter) for every parameter on this tape. Parameters that
  /// do not reach the loss get zero tensors. The loss must hold one element.
  Gradients<T> backward(Var loss) const;

 private:
  Var record(TapeNode<T> node);
  const TensorT& val(Var v) const { return node(v).value; }

  const AdjointTable<T>* adjoints_;
  std::vector<TapeNode<T>> nodes_;
  std::set<std::string> parameter_names_;
};

}  // namespace muster
