// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0
//
// Multi-head skip attention (queries from one feature map, keys/values from
// another) over regular and shifted windows, and the light variant that
// drops the K/V/output projections, downsamples K=V with a depthwise conv and
// adds learnable inner (pre-softmax) and outer (post-softmax) biases.
//
// Logits are always laid out [query_tokens, key_tokens].

#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "muster/autodiff.hpp"
#include "muster/tensor.hpp"
#include "muster/windowing.hpp"

namespace muster {

/// index[q * M^2 + k] into a [(2M-1)^2, heads] table, keyed on the
/// (row, col) offset between query token q and key token k.
std::shared_ptr<const std::vector<std::int64_t>> relative_position_index(std::int64_t window);

struct RelPosBias {
  std::int64_t window = 0;
  Tensor64 table;  // [(2M-1)^2, heads]

  std::int64_t heads() const { return table.dim(1); }
  /// Materialized [heads, M^2, M^2] bias.
  Tensor64 matrix() const;
};

struct MskaParams {
  std::int64_t heads = 1;
  std::int64_t window = 1;
  Tensor64 wq, wk, wv, wo;  // [C, C]
  RelPosBias rel_pos;

  std::int64_t channels() const { return wq.dim(0); }
  void validate() const;

  /// Seeded normal init. Zero `rel_pos_stddev` disables the position bias.
  static MskaParams random(std::int64_t channels, std::int64_t heads, std::int64_t window,
                           std::uint64_t seed, double stddev = 0.02,
                           double rel_pos_stddev = 0.02);
};

struct LightAttnParams {
  std::int64_t heads = 1;
  std::int64_t window = 2;
  Tensor64 wq;                     // [C, C]
  Tensor64 dw_weight, dw_bias;     // [2, 2, C], [C]; shared K = V path
  Tensor64 inner_bias, outer_bias; // [heads, M^2, (M/2)^2]

  std::int64_t channels() const { return wq.dim(0); }
  void validate() const;

  static LightAttnParams random(std::int64_t channels, std::int64_t heads, std::int64_t window,
                                std::uint64_t seed, double stddev = 0.02);
};

// ---- graph-level building blocks (used by the decoder and gradcheck) ----

struct MskaVars {
  std::int64_t heads = 1;
  std::int64_t window = 1;
  Var wq, wk, wv, wo, rel_pos_table;
};

struct LightVars {
  std::int64_t heads = 1;
  std::int64_t window = 2;
  Var wq, dw_weight, dw_bias, inner_bias, outer_bias;
};

template <typename T>
MskaVars register_params(Tape<T>& tape, const MskaParams& p, const std::string& prefix);
template <typename T>
LightVars register_params(Tape<T>& tape, const LightAttnParams& p, const std::string& prefix);

/// Skip attention over window blocks: q [nW, M^2, C], kv [nW, M^2, C].
/// `mask` is [nW, M^2, M^2] additive, or null.
template <typename T>
Var mska_windows(Tape<T>& tape, Var q_windows, Var kv_windows, const MskaVars& p,
                 std::shared_ptr<const BasicTensor<T>> mask);

/// Light attention over window blocks: q [nW, M^2, C], kv [nW, (M/2)^2, C]
/// (already downsampled). `mask` is [nW, M^2, (M/2)^2] additive, or null.
template <typename T>
Var light_windows(Tape<T>& tape, Var q_windows, Var kv_windows, const LightVars& p,
                  std::shared_ptr<const BasicTensor<T>> mask);

/// Whole-map skip attention on [H,W,C] operands: pad to the window grid,
/// optionally cyclic-shift by M/2 with masks, attend, undo.
template <typename T>
Var mska_map(Tape<T>& tape, Var query_map, Var kv_map, const MskaVars& p, bool shifted);

/// Whole-map light attention: K = V = depthwise_conv_down2(padded kv map),
/// partitioned with window M/2; shifted variant shifts keys by M/4.
template <typename T>
Var light_map(Tape<T>& tape, Var query_map, Var kv_map, const LightVars& p, bool shifted);

// ---- eager entry points ----

/// W-MSKA on one window: f_win, m_win are [M^2, C].
template <typename T>
BasicTensor<T> w_mska(const BasicTensor<T>& f_win, const BasicTensor<T>& m_win,
                      const MskaParams& p, const AttentionMask* mask = nullptr);

/// SW-MSKA on full [H,W,C] maps. `grid` must carry shift == M/2 and match the
/// padded extents of the operands.
template <typename T>
BasicTensor<T> sw_mska(const BasicTensor<T>& out_prev, const BasicTensor<T>& m_feat,
                       const MskaParams& p, const WindowGrid& grid);

/// Light attention on one window: x_skip_win [M^2, C], x_win_down [(M/2)^2, C].
template <typename T>
BasicTensor<T> light_attention(const BasicTensor<T>& x_skip_win, const BasicTensor<T>& x_win_down,
                               const LightAttnParams& p, const AttentionMask* mask = nullptr);

}  // namespace muster
