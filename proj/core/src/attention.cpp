// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0

#include "muster/attention.hpp"

#include <cmath>
#include <mutex>
#include <unordered_map>

#include "muster/error.hpp"
#include "muster/kernels.hpp"
#include "muster/rng.hpp"

namespace muster {

namespace {

void require_square(const Tensor64& w, std::int64_t c, const char* what) {
  if (w.rank() != 2 || w.dim(0) != c || w.dim(1) != c) {
    throw Error(ErrorCode::kShape, std::string(what) + " must be [" + std::to_string(c) + ", " +
                                       std::to_string(c) + "], got " + shape_string(w.dims()));
  }
}

void require_heads(std::int64_t channels, std::int64_t heads) {
  if (heads < 1 || channels % heads != 0) {
    throw Error(ErrorCode::kConfig, "channels " + std::to_string(channels) +
                                        " not divisible by heads " + std::to_string(heads));
  }
}

// Repeats a per-window mask [nW, Tq, Tk] across heads: [nW*heads, Tq, Tk].
template <typename T>
std::shared_ptr<const BasicTensor<T>> per_head(const BasicTensor<T>& mask, std::int64_t heads) {
  const std::int64_t nw = mask.dim(0), block = mask.dim(1) * mask.dim(2);
  auto out = std::make_shared<BasicTensor<T>>(Shape{nw * heads, mask.dim(1), mask.dim(2)});
  const T* src = mask.data().data();
  T* dst = out->data().data();
  for (std::int64_t w = 0; w < nw; ++w)
    for (std::int64_t h = 0; h < heads; ++h)
      std::copy_n(src + w * block, block, dst + (w * heads + h) * block);
  return out;
}

template <typename T>
std::shared_ptr<const BasicTensor<T>> single_mask(const AttentionMask* mask, std::int64_t tq,
                                                  std::int64_t tk) {
  if (mask == nullptr) return nullptr;
  const Tensor& m = mask->matrix;
  if (m.rank() != 2 || m.dim(0) != tq || m.dim(1) != tk) {
    throw Error(ErrorCode::kShape, "mask must be [" + std::to_string(tq) + ", " +
                                       std::to_string(tk) + "], got " + shape_string(m.dims()));
  }
  auto out = std::make_shared<BasicTensor<T>>(Shape{1, tq, tk});
  for (std::int64_t i = 0; i < m.size(); ++i) {
    (*out)[i] = m[i] == 0.0f ? T{0} : static_cast<T>(kMaskedLogit);
  }
  return out;
}

template <typename T>
BasicTensor<T> as_window_batch(const BasicTensor<T>& x, std::int64_t tokens, std::int64_t c,
                               const char* what) {
  if (x.rank() != 2 || x.dim(0) != tokens || x.dim(1) != c) {
    throw Error(ErrorCode::kShape, std::string(what) + " must be [" + std::to_string(tokens) +
                                       ", " + std::to_string(c) + "], got " +
                                       shape_string(x.dims()));
  }
  return x.reshaped({1, tokens, c});
}

}  // namespace

std::shared_ptr<const std::vector<std::int64_t>> relative_position_index(std::int64_t window) {
  if (window < 1) throw Error(ErrorCode::kConfig, "window must be positive");
  static std::mutex mu;
  static std::unordered_map<std::int64_t, std::shared_ptr<const std::vector<std::int64_t>>> cache;
  std::lock_guard lock(mu);
  if (auto it = cache.find(window); it != cache.end()) return it->second;

  const std::int64_t M = window, tokens = M * M, span = 2 * M - 1;
  auto index = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(tokens * tokens));
  for (std::int64_t q = 0; q < tokens; ++q) {
    for (std::int64_t k = 0; k < tokens; ++k) {
      const std::int64_t dr = q / M - k / M, dc = q % M - k % M;
      (*index)[static_cast<std::size_t>(q * tokens + k)] = (dr + M - 1) * span + (dc + M - 1);
    }
  }
  cache.emplace(window, index);
  return index;
}

Tensor64 RelPosBias::matrix() const {
  const std::int64_t tokens = window * window, h = heads();
  const auto index = relative_position_index(window);
  Tensor64 out({h, tokens, tokens});
  const std::int64_t pairs = tokens * tokens;
  for (std::int64_t head = 0; head < h; ++head)
    for (std::int64_t p = 0; p < pairs; ++p)
      out[head * pairs + p] = table.at((*index)[static_cast<std::size_t>(p)], head);
  return out;
}

void MskaParams::validate() const {
  const std::int64_t c = channels();
  require_heads(c, heads);
  require_square(wq, c, "wq");
  require_square(wk, c, "wk");
  require_square(wv, c, "wv");
  require_square(wo, c, "wo");
  const std::int64_t span = 2 * window - 1;
  if (rel_pos.window != window || rel_pos.table.rank() != 2 || rel_pos.table.dim(0) != span * span ||
      rel_pos.table.dim(1) != heads) {
    throw Error(ErrorCode::kShape, "relative position table must be [" +
                                       std::to_string(span * span) + ", " +
                                       std::to_string(heads) + "], got " +
                                       shape_string(rel_pos.table.dims()));
  }
}

MskaParams MskaParams::random(std::int64_t channels, std::int64_t heads, std::int64_t window,
                              std::uint64_t seed, double stddev, double rel_pos_stddev) {
  require_heads(channels, heads);
  MskaParams p;
  p.heads = heads;
  p.window = window;
  p.wq = Rng::derive(seed, "wq").normal_tensor({channels, channels}, stddev);
  p.wk = Rng::derive(seed, "wk").normal_tensor({channels, channels}, stddev);
  p.wv = Rng::derive(seed, "wv").normal_tensor({channels, channels}, stddev);
  p.wo = Rng::derive(seed, "wo").normal_tensor({channels, channels}, stddev);
  const std::int64_t span = 2 * window - 1;
  p.rel_pos.window = window;
  p.rel_pos.table = rel_pos_stddev == 0.0
                        ? Tensor64::zeros({span * span, heads})
                        : Rng::derive(seed, "rel_pos").normal_tensor({span * span, heads},
                                                                    rel_pos_stddev);
  return p;
}

void LightAttnParams::validate() const {
  const std::int64_t c = channels();
  require_heads(c, heads);
  require_square(wq, c, "wq");
  if (window < 2 || window % 2 != 0) {
    throw Error(ErrorCode::kConfig, "light attention needs an even window, got " +
                                        std::to_string(window));
  }
  if (dw_weight.dims() != Shape{2, 2, c} || dw_bias.dims() != Shape{c}) {
    throw Error(ErrorCode::kShape, "depthwise weights must be [2, 2, C] and [C]");
  }
  const Shape bias_shape{heads, window * window, (window / 2) * (window / 2)};
  if (inner_bias.dims() != bias_shape || outer_bias.dims() != bias_shape) {
    throw Error(ErrorCode::kShape, "inner/outer biases must be " + shape_string(bias_shape));
  }
}

LightAttnParams LightAttnParams::random(std::int64_t channels, std::int64_t heads,
                                        std::int64_t window, std::uint64_t seed, double stddev) {
  require_heads(channels, heads);
  LightAttnParams p;
  p.heads = heads;
  p.window = window;
  const std::int64_t tq = window * window, tk = (window / 2) * (window / 2);
  p.wq = Rng::derive(seed, "wq").normal_tensor({channels, channels}, stddev);
  p.dw_weight = Rng::derive(seed, "dw_weight").normal_tensor({2, 2, channels}, stddev);
  p.dw_bias = Tensor64::zeros({channels});
  p.inner_bias = Rng::derive(seed, "inner_bias").normal_tensor({heads, tq, tk}, stddev);
  p.outer_bias = Rng::derive(seed, "outer_bias").normal_tensor({heads, tq, tk}, stddev);
  return p;
}

template <typename T>
MskaVars register_params(Tape<T>& tape, const MskaParams& p, const std::string& prefix) {
  p.validate();
  MskaVars v;
  v.heads = p.heads;
  v.window = p.window;
  v.wq = tape.parameter(prefix + "wq", p.wq.template cast<T>());
  v.wk = tape.parameter(prefix + "wk", p.wk.template cast<T>());
  v.wv = tape.parameter(prefix + "wv", p.wv.template cast<T>());
  v.wo = tape.parameter(prefix + "wo", p.wo.template cast<T>());
  v.rel_pos_table = tape.parameter(prefix + "rel_pos", p.rel_pos.table.template cast<T>());
  return v;
}

template <typename T>
LightVars register_params(Tape<T>& tape, const LightAttnParams& p, const std::string& prefix) {
  p.validate();
  LightVars v;
  v.heads = p.heads;
  v.window = p.window;
  v.wq = tape.parameter(prefix + "wq", p.wq.template cast<T>());
  v.dw_weight = tape.parameter(prefix + "dw_weight", p.dw_weight.template cast<T>());
  v.dw_bias = tape.parameter(prefix + "dw_bias", p.dw_bias.template cast<T>());
  v.inner_bias = tape.parameter(prefix + "inner_bias", p.inner_bias.template cast<T>());
  v.outer_bias = tape.parameter(prefix + "outer_bias", p.outer_bias.template cast<T>());
  return v;
}

template <typename T>
Var mska_windows(Tape<T>& tape, Var q_windows, Var kv_windows, const MskaVars& p,
                 std::shared_ptr<const BasicTensor<T>> mask) {
  const auto& q = tape.value(q_windows);
  const auto& kv = tape.value(kv_windows);
  require_rank(q, 3, "mska_windows query");
  require_rank(kv, 3, "mska_windows key/value");
  const std::int64_t c = q.dim(2), tokens = p.window * p.window;
  require_heads(c, p.heads);
  if (q.dim(1) != tokens || kv.dims() != q.dims()) {
    throw Error(ErrorCode::kShape, "mska_windows: query " + shape_string(q.dims()) +
                                       " and key/value " + shape_string(kv.dims()) +
                                       " must both be [nW, " + std::to_string(tokens) + ", C]");
  }

  // `q` refers into the tape's node storage; read what is needed before recording.
  const std::int64_t windows = q.dim(0);
  const Var qh = tape.split_heads(tape.linear(q_windows, p.wq), p.heads);
  const Var kh = tape.split_heads(tape.linear(kv_windows, p.wk), p.heads);
  const Var vh = tape.split_heads(tape.linear(kv_windows, p.wv), p.heads);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(c / p.heads));
  Var logits = tape.scale(tape.batched_matmul(qh, kh, false, true), inv_sqrt_d);
  logits = tape.add_head_bias(
      logits, tape.gather_rel_pos(p.rel_pos_table, relative_position_index(p.window), tokens));
  if (mask) {
    if (mask->dims() != Shape{windows, tokens, tokens}) {
      throw Error(ErrorCode::kShape, "mska_windows: mask " + shape_string(mask->dims()) +
                                         " does not match " +
                                         shape_string({windows, tokens, tokens}));
    }
    logits = tape.add_constant(logits, per_head(*mask, p.heads));
  }
  const Var attn = tape.softmax_rows(logits);
  const Var merged = tape.merge_heads(tape.batched_matmul(attn, vh), p.heads);
  return tape.linear(merged, p.wo);
}

template <typename T>
Var light_windows(Tape<T>& tape, Var q_windows, Var kv_windows, const LightVars& p,
                  std::shared_ptr<const BasicTensor<T>> mask) {
  const auto& q = tape.value(q_windows);
  const auto& kv = tape.value(kv_windows);
  require_rank(q, 3, "light_windows query");
  require_rank(kv, 3, "light_windows key/value");
  const std::int64_t c = q.dim(2), tq = p.window * p.window,
                     tk = (p.window / 2) * (p.window / 2);
  require_heads(c, p.heads);
  if (q.dim(1) != tq || kv.dim(0) != q.dim(0) || kv.dim(1) != tk || kv.dim(2) != c) {
    throw Error(ErrorCode::kShape, "light_windows: query " + shape_string(q.dims()) +
                                       " / key " + shape_string(kv.dims()) + " expected [nW, " +
                                       std::to_string(tq) + ", C] / [nW, " + std::to_string(tk) +
                                       ", C]");
  }

  const std::int64_t windows = q.dim(0);
  const Var qh = tape.split_heads(tape.linear(q_windows, p.wq), p.heads);
  const Var kvh = tape.split_heads(kv_windows, p.heads);
  Var logits = tape.add_head_bias(tape.batched_matmul(qh, kvh, false, true), p.inner_bias);
  if (mask) {
    if (mask->dims() != Shape{windows, tq, tk}) {
      throw Error(ErrorCode::kShape, "light_windows: mask " + shape_string(mask->dims()) +
                                         " does not match " + shape_string({windows, tq, tk}));
    }
    logits = tape.add_constant(logits, per_head(*mask, p.heads));
  }
  const Var attn = tape.add_head_bias(tape.softmax_rows(logits), p.outer_bias);
  return tape.merge_heads(tape.batched_matmul(attn, kvh), p.heads);
}

template <typename T>
Var mska_map(Tape<T>& tape, Var query_map, Var kv_map, const MskaVars& p, bool shifted) {
  const auto& q = tape.value(query_map);
  require_rank(q, 3, "mska_map query");
  if (tape.value(kv_map).dims() != q.dims()) {
    throw Error(ErrorCode::kShape, "mska_map: query " + shape_string(q.dims()) +
                                       " and key/value " +
                                       shape_string(tape.value(kv_map).dims()) + " differ");
  }
  const std::int64_t H = q.dim(0), W = q.dim(1), M = p.window;
  const WindowGrid grid{padded_extent(H, M), padded_extent(W, M), M, shifted ? M / 2 : 0};
  grid.validate();

  Var qs = tape.pad_hw(query_map, grid.height, grid.width);
  Var ks = tape.pad_hw(kv_map, grid.height, grid.width);
  std::shared_ptr<const BasicTensor<T>> mask;
  if (shifted) {
    qs = tape.cyclic_shift(qs, grid.shift);
    ks = tape.cyclic_shift(ks, grid.shift);
    mask = std::make_shared<const BasicTensor<T>>(
        cached_masks(grid, MaskFamily::kStandard)->template expand<T>(kMaskedLogit));
  }
  Var out = mska_windows(tape, tape.window_partition(qs, M), tape.window_partition(ks, M), p,
                         std::move(mask));
  out = tape.window_reverse(out, M, grid.height, grid.width);
  if (shifted) out = tape.cyclic_shift(out, -grid.shift);
  return tape.crop_hw(out, H, W);
}

template <typename T>
Var light_map(Tape<T>& tape, Var query_map, Var kv_map, const LightVars& p, bool shifted) {
  const auto& q = tape.value(query_map);
  require_rank(q, 3, "light_map query");
  if (tape.value(kv_map).dims() != q.dims()) {
    throw Error(ErrorCode::kShape, "light_map: query " + shape_string(q.dims()) +
                                       " and key/value " +
                                       shape_string(tape.value(kv_map).dims()) + " differ");
  }
  const std::int64_t H = q.dim(0), W = q.dim(1), M = p.window;
  if (shifted && M % 4 != 0) {
    throw Error(ErrorCode::kConfig,
                "shifted light attention needs window % 4 == 0, got " + std::to_string(M));
  }
  const WindowGrid grid{padded_extent(H, M), padded_extent(W, M), M, shifted ? M / 2 : 0};
  grid.validate();

  Var qs = tape.pad_hw(query_map, grid.height, grid.width);
  Var kd = tape.depthwise_conv_down2(tape.pad_hw(kv_map, grid.height, grid.width), p.dw_weight,
                                     p.dw_bias);
  std::shared_ptr<const BasicTensor<T>> mask;
  if (shifted) {
    qs = tape.cyclic_shift(qs, grid.shift);
    kd = tape.cyclic_shift(kd, M / 4);
    mask = std::make_shared<const BasicTensor<T>>(
        cached_masks(grid, MaskFamily::kLight)->template expand<T>(kMaskedLogit));
  }
  Var out = light_windows(tape, tape.window_partition(qs, M), tape.window_partition(kd, M / 2),
                          p, std::move(mask));
  out = tape.window_reverse(out, M, grid.height, grid.width);
  if (shifted) out = tape.cyclic_shift(out, -grid.shift);
  return tape.crop_hw(out, H, W);
}

template <typename T>
BasicTensor<T> w_mska(const BasicTensor<T>& f_win, const BasicTensor<T>& m_win,
                      const MskaParams& p, const AttentionMask* mask) {
  p.validate();
  const std::int64_t tokens = p.window * p.window, c = p.channels();
  Tape<T> tape;
  const MskaVars v = register_params(tape, p, "");
  const Var q = tape.constant(as_window_batch(f_win, tokens, c, "f_win"));
  const Var kv = tape.constant(as_window_batch(m_win, tokens, c, "m_win"));
  const Var out = mska_windows(tape, q, kv, v, single_mask<T>(mask, tokens, tokens));
  return tape.value(out).reshaped({tokens, c});
}

template <typename T>
BasicTensor<T> sw_mska(const BasicTensor<T>& out_prev, const BasicTensor<T>& m_feat,
                       const MskaParams& p, const WindowGrid& grid) {
  p.validate();
  grid.validate();
  if (grid.window != p.window) {
    throw Error(ErrorCode::kConfig, "grid window " + std::to_string(grid.window) +
                                        " differs from attention window " +
                                        std::to_string(p.window));
  }
  if (grid.shift != grid.window / 2) {
    throw Error(ErrorCode::kUnsupportedShift,
                "sw_mska requires shift == window/2, got " + std::to_string(grid.shift));
  }
  require_rank(out_prev, 3, "sw_mska input");
  if (padded_extent(out_prev.dim(0), grid.window) != grid.height ||
      padded_extent(out_prev.dim(1), grid.window) != grid.width) {
    throw Error(ErrorCode::kShape, "sw_mska: input " + shape_string(out_prev.dims()) +
                                       " does not pad to grid " + std::to_string(grid.height) +
                                       "x" + std::to_string(grid.width));
  }
  Tape<T> tape;
  const MskaVars v = register_params(tape, p, "");
  const Var out = mska_map(tape, tape.constant(out_prev), tape.constant(m_feat), v, true);
  return tape.value(out);
}

template <typename T>
BasicTensor<T> light_attention(const BasicTensor<T>& x_skip_win, const BasicTensor<T>& x_win_down,
                               const LightAttnParams& p, const AttentionMask* mask) {
  p.validate();
  const std::int64_t tq = p.window * p.window, tk = (p.window / 2) * (p.window / 2),
                     c = p.channels();
  Tape<T> tape;
  const LightVars v = register_params(tape, p, "");
  const Var q = tape.constant(as_window_batch(x_skip_win, tq, c, "x_skip_win"));
  const Var kv = tape.constant(as_window_batch(x_win_down, tk, c, "x_win_down"));
  const Var out = light_windows(tape, q, kv, v, single_mask<T>(mask, tq, tk));
  return tape.value(out).reshaped({tq, c});
}

#define MUSTER_INSTANTIATE_ATTENTION(T)                                                         \
  template MskaVars register_params(Tape<T>&, const MskaParams&, const std::string&);           \
  template LightVars register_params(Tape<T>&, const LightAttnParams&, const std::string&);     \
  template Var mska_windows(Tape<T>&, Var, Var, const MskaVars&,                                \
                            std::shared_ptr<const BasicTensor<T>>);                             \
  template Var light_windows(Tape<T>&, Var, Var, const LightVars&,                              \
                             std::shared_ptr<const BasicTensor<T>>);                            \
  template Var mska_map(Tape<T>&, Var, Var, const MskaVars&, bool);                             \
  template Var light_map(Tape<T>&, Var, Var, const LightVars&, bool);                           \
  template BasicTensor<T> w_mska(const BasicTensor<T>&, const BasicTensor<T>&,                  \
                                 const MskaParams&, const AttentionMask*);                      \
  template BasicTensor<T> sw_mska(const BasicTensor<T>&, const BasicTensor<T>&,                 \
                                  const MskaParams&, const WindowGrid&);                        \
  template BasicTensor<T> light_attention(const BasicTensor<T>&, const BasicTensor<T>&,         \
                                          const LightAttnParams&, const AttentionMask*);

MUSTER_INSTANTIATE_ATTENTION(float)
MUSTER_INSTANTIATE_ATTENTION(double)

#undef MUSTER_INSTANTIATE_ATTENTION

}  // namespace muster
