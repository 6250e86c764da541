// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0

#include "oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "muster/analyzer.hpp"
#include "muster/decoder.hpp"
#include "muster/error.hpp"
#include "muster/kernels.hpp"
#include "muster/parallel.hpp"
#include "muster/rng.hpp"

namespace muster::oracle {

namespace {

using i64 = std::int64_t;

void expect(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("oracle: " + what);
}

bool masked(const Tensor* mask, i64 q, i64 k) {
  return mask != nullptr && std::isinf(mask->at(q, k));
}

// Softmax over the unmasked entries of one row; masked entries get 0.
std::vector<double> masked_softmax(const std::vector<long double>& logits,
                                   const std::vector<bool>& skip) {
  long double mx = -std::numeric_limits<long double>::infinity();
  for (std::size_t k = 0; k < logits.size(); ++k)
    if (!skip[k]) mx = std::max(mx, logits[k]);
  expect(std::isfinite(static_cast<double>(mx)), "row has no visible key");
  long double z = 0;
  for (std::size_t k = 0; k < logits.size(); ++k)
    if (!skip[k]) z += std::exp(logits[k] - mx);
  std::vector<double> out(logits.size(), 0.0);
  for (std::size_t k = 0; k < logits.size(); ++k)
    if (!skip[k]) out[k] = static_cast<double>(std::exp(logits[k] - mx) / z);
  return out;
}

Tensor64 project(const Tensor64& x, const Tensor64& w) {
  const i64 t = x.dim(0), cin = x.dim(1), cout = w.dim(1);
  expect(w.dim(0) == cin, "projection shape");
  Tensor64 y({t, cout});
  for (i64 i = 0; i < t; ++i)
    for (i64 o = 0; o < cout; ++o) {
      long double acc = 0;
      for (i64 j = 0; j < cin; ++j) acc += static_cast<long double>(x.at(i, j)) * w.at(j, o);
      y.at(i, o) = static_cast<double>(acc);
    }
  return y;
}

double rel_bias(const MskaParams& p, i64 q, i64 k, i64 head) {
  const i64 M = p.window;
  const i64 dr = q / M - k / M, dc = q % M - k % M;
  return p.rel_pos.table.at((dr + M - 1) * (2 * M - 1) + (dc + M - 1), head);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

Tensor64 matmul(const Tensor64& a, const Tensor64& b) {
  expect(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0), "matmul shapes");
  Tensor64 c({a.dim(0), b.dim(1)});
  for (i64 i = 0; i < a.dim(0); ++i)
    for (i64 j = 0; j < b.dim(1); ++j) {
      long double acc = 0;
      for (i64 t = 0; t < a.dim(1); ++t) acc += static_cast<long double>(a.at(i, t)) * b.at(t, j);
      c.at(i, j) = static_cast<double>(acc);
    }
  return c;
}

Tensor64 softmax_rows(const Tensor64& x) {
  const i64 cols = x.dims().back(), rows = x.size() / cols;
  Tensor64 y(x.dims());
  for (i64 r = 0; r < rows; ++r) {
    std::vector<long double> logits(static_cast<std::size_t>(cols));
    std::vector<bool> skip(static_cast<std::size_t>(cols));
    for (i64 c = 0; c < cols; ++c) {
      logits[static_cast<std::size_t>(c)] = x[r * cols + c];
      skip[static_cast<std::size_t>(c)] = std::isinf(x[r * cols + c]) && x[r * cols + c] < 0;
    }
    const auto row = masked_softmax(logits, skip);
    for (i64 c = 0; c < cols; ++c) y[r * cols + c] = row[static_cast<std::size_t>(c)];
  }
  return y;
}

Tensor64 layer_norm(const Tensor64& x, const Tensor64& gamma, const Tensor64& beta, double eps) {
  const i64 c = x.dims().back(), tokens = x.size() / c;
  Tensor64 y(x.dims());
  for (i64 t = 0; t < tokens; ++t) {
    long double mean = 0;
    for (i64 j = 0; j < c; ++j) mean += x[t * c + j];
    mean /= c;
    long double var = 0;
    for (i64 j = 0; j < c; ++j) var += (x[t * c + j] - mean) * (x[t * c + j] - mean);
    var /= c;
    const long double inv = 1.0L / std::sqrt(var + eps);
    for (i64 j = 0; j < c; ++j) {
      y[t * c + j] = static_cast<double>((x[t * c + j] - mean) * inv * gamma[j] + beta[j]);
    }
  }
  return y;
}

Tensor64 conv1x1(const Tensor64& x, const Tensor64& w, const Tensor64& b) {
  expect(x.rank() == 3 && w.rank() == 2 && x.dim(2) == w.dim(0) && b.size() == w.dim(1),
         "conv1x1 shapes");
  const i64 H = x.dim(0), W = x.dim(1), cin = w.dim(0), cout = w.dim(1);
  Tensor64 y({H, W, cout});
  for (i64 i = 0; i < H; ++i)
    for (i64 j = 0; j < W; ++j)
      for (i64 o = 0; o < cout; ++o) {
        long double acc = b[o];
        for (i64 c = 0; c < cin; ++c) acc += static_cast<long double>(x.at(i, j, c)) * w.at(c, o);
        y.at(i, j, o) = static_cast<double>(acc);
      }
  return y;
}

Tensor64 depthwise_down2(const Tensor64& x, const Tensor64& w, const Tensor64& b) {
  expect(x.rank() == 3 && x.dim(0) % 2 == 0 && x.dim(1) % 2 == 0, "depthwise input");
  const i64 H = x.dim(0) / 2, W = x.dim(1) / 2, C = x.dim(2);
  Tensor64 y({H, W, C});
  for (i64 i = 0; i < H; ++i)
    for (i64 j = 0; j < W; ++j)
      for (i64 c = 0; c < C; ++c)
        y.at(i, j, c) = b[c] + x.at(2 * i, 2 * j, c) * w.at(0, 0, c) +
                        x.at(2 * i, 2 * j + 1, c) * w.at(0, 1, c) +
                        x.at(2 * i + 1, 2 * j, c) * w.at(1, 0, c) +
                        x.at(2 * i + 1, 2 * j + 1, c) * w.at(1, 1, c);
  return y;
}

Tensor64 pixel_shuffle(const Tensor64& x, i64 r) {
  expect(x.rank() == 3 && x.dim(2) % (r * r) == 0, "pixel_shuffle input");
  const i64 H = x.dim(0), W = x.dim(1), C = x.dim(2) / (r * r);
  Tensor64 y({H * r, W * r, C});
  for (i64 oi = 0; oi < H * r; ++oi)
    for (i64 oj = 0; oj < W * r; ++oj)
      for (i64 c = 0; c < C; ++c)
        y.at(oi, oj, c) = x.at(oi / r, oj / r, c * r * r + (oi % r) * r + (oj % r));
  return y;
}

std::pair<i64, i64> window_token_pixel(i64 t, i64 wi, i64 wj, i64 window) {
  return {wi * window + t / window, wj * window + t % window};
}

Tensor standard_window_mask(const WindowGrid& grid, i64 wi, i64 wj) {
  const i64 H = grid.height, W = grid.width, M = grid.window, s = M / 2;
  expect(H >= 2 * M && W >= 2 * M, "adjacency rule needs two windows per axis");
  auto source = [&](i64 t) {
    const auto [r, c] = window_token_pixel(t, wi, wj, M);
    return std::pair{(r + s) % H, (c + s) % W};
  };
  const float inf = std::numeric_limits<float>::infinity();
  Tensor mask({M * M, M * M});
  for (i64 q = 0; q < M * M; ++q)
    for (i64 k = 0; k < M * M; ++k) {
      const auto [qr, qc] = source(q);
      const auto [kr, kc] = source(k);
      const bool near = std::abs(qr - kr) <= M - 1 && std::abs(qc - kc) <= M - 1;
      mask.at(q, k) = near ? 0.0f : -inf;
    }
  return mask;
}

Tensor light_window_mask(const WindowGrid& grid, i64 wi, i64 wj) {
  const i64 H = grid.height, W = grid.width, M = grid.window, s = M / 2;
  expect(H >= 2 * M && W >= 2 * M, "adjacency rule needs two windows per axis");
  expect(M % 4 == 0, "light mask needs window % 4 == 0");
  const i64 half = M / 2, key_shift = M / 4;
  const float inf = std::numeric_limits<float>::infinity();
  Tensor mask({M * M, half * half});
  for (i64 q = 0; q < M * M; ++q) {
    const auto [r, c] = window_token_pixel(q, wi, wj, M);
    const i64 qr = (r + s) % H, qc = (c + s) % W;
    for (i64 k = 0; k < half * half; ++k) {
      const auto [hr, hc] = window_token_pixel(k, wi, wj, half);
      const i64 br = (hr + key_shift) % (H / 2), bc = (hc + key_shift) % (W / 2);
      int visible = 0;
      for (i64 di = 0; di < 2; ++di)
        for (i64 dj = 0; dj < 2; ++dj) {
          const i64 pr = 2 * br + di, pc = 2 * bc + dj;
          visible += std::abs(qr - pr) <= M - 1 && std::abs(qc - pc) <= M - 1;
        }
      expect(visible == 0 || visible == 4, "key block straddles two regions");
      mask.at(q, k) = visible == 4 ? 0.0f : -inf;
    }
  }
  return mask;
}

MaskComparison compare_masks(const WindowGrid& grid, MaskFamily family) {
  const MaskSet set = family == MaskFamily::kStandard ? build_sw_mask(grid)
                                                      : build_light_sw_mask(grid);
  MaskComparison out;
  std::set<std::vector<float>> distinct;
  for (i64 wi = 0; wi < grid.rows(); ++wi)
    for (i64 wj = 0; wj < grid.cols(); ++wj) {
      const Tensor want = family == MaskFamily::kStandard ? standard_window_mask(grid, wi, wj)
                                                          : light_window_mask(grid, wi, wj);
      const Tensor& got = set.masks[static_cast<std::size_t>(set.assignment.id(wi, wj))].matrix;
      distinct.insert(want.storage());
      if (!got.identical(want)) {
        out.equal = false;
        if (out.detail.empty()) {
          out.detail = "window (" + std::to_string(wi) + "," + std::to_string(wj) + ") differs";
        }
      }
    }
  out.distinct = static_cast<int>(distinct.size());
  return out;
}

Tensor64 mska(const Tensor64& f_win, const Tensor64& m_win, const MskaParams& p,
              const Tensor* mask) {
  const i64 T = f_win.dim(0), C = f_win.dim(1), heads = p.heads, d = C / heads;
  expect(m_win.dim(0) == T && m_win.dim(1) == C && T == p.window * p.window, "mska shapes");
  const Tensor64 Q = project(f_win, p.wq), K = project(m_win, p.wk), V = project(m_win, p.wv);
  Tensor64 concat({T, C});
  const long double scale = 1.0L / std::sqrt(static_cast<long double>(d));
  for (i64 h = 0; h < heads; ++h)
    for (i64 q = 0; q < T; ++q) {
      std::vector<long double> logits(static_cast<std::size_t>(T));
      std::vector<bool> skip(static_cast<std::size_t>(T));
      for (i64 k = 0; k < T; ++k) {
        long double dot = 0;
        for (i64 e = 0; e < d; ++e) dot += static_cast<long double>(Q.at(q, h * d + e)) * K.at(k, h * d + e);
        logits[static_cast<std::size_t>(k)] = dot * scale + rel_bias(p, q, k, h);
        skip[static_cast<std::size_t>(k)] = masked(mask, q, k);
      }
      const auto a = masked_softmax(logits, skip);
      for (i64 e = 0; e < d; ++e) {
        long double acc = 0;
        for (i64 k = 0; k < T; ++k) acc += a[static_cast<std::size_t>(k)] * static_cast<long double>(V.at(k, h * d + e));
        concat.at(q, h * d + e) = static_cast<double>(acc);
      }
    }
  return project(concat, p.wo);
}

Tensor64 msa(const Tensor64& x, const MskaParams& p) {
  const i64 T = x.dim(0), C = x.dim(1), heads = p.heads, d = C / heads;
  const Tensor64 qkv[3] = {matmul(x, p.wq), matmul(x, p.wk), matmul(x, p.wv)};
  Tensor64 out({T, C});
  for (i64 h = 0; h < heads; ++h) {
    // Per-head score matrix, then row softmax, then values.
    Tensor64 scores({T, T});
    for (i64 q = 0; q < T; ++q)
      for (i64 k = 0; k < T; ++k) {
        double dot = 0;
        for (i64 e = 0; e < d; ++e) dot += qkv[0].at(q, h * d + e) * qkv[1].at(k, h * d + e);
        scores.at(q, k) = dot / std::sqrt(static_cast<double>(d)) + rel_bias(p, q, k, h);
      }
    const Tensor64 attn = softmax_rows(scores);
    for (i64 q = 0; q < T; ++q)
      for (i64 e = 0; e < d; ++e) {
        double acc = 0;
        for (i64 k = 0; k < T; ++k) acc += attn.at(q, k) * qkv[2].at(k, h * d + e);
        out.at(q, h * d + e) = acc;
      }
  }
  return matmul(out, p.wo);
}

Tensor64 light(const Tensor64& x, const Tensor64& keys, const LightAttnParams& p,
               const Tensor* mask) {
  const i64 Tq = x.dim(0), Tk = keys.dim(0), C = x.dim(1), heads = p.heads, d = C / heads;
  expect(Tq == p.window * p.window && Tk == Tq / 4 && keys.dim(1) == C, "light shapes");
  const Tensor64 Q = project(x, p.wq);
  Tensor64 out({Tq, C});
  for (i64 h = 0; h < heads; ++h)
    for (i64 q = 0; q < Tq; ++q) {
      std::vector<long double> logits(static_cast<std::size_t>(Tk));
      std::vector<bool> skip(static_cast<std::size_t>(Tk));
      for (i64 k = 0; k < Tk; ++k) {
        long double dot = 0;
        for (i64 e = 0; e < d; ++e) dot += static_cast<long double>(Q.at(q, h * d + e)) * keys.at(k, h * d + e);
        logits[static_cast<std::size_t>(k)] = dot + p.inner_bias.at(h, q, k);
        skip[static_cast<std::size_t>(k)] = masked(mask, q, k);
      }
      const auto a = masked_softmax(logits, skip);
      for (i64 e = 0; e < d; ++e) {
        long double acc = 0;
        for (i64 k = 0; k < Tk; ++k) {
          acc += (a[static_cast<std::size_t>(k)] + static_cast<long double>(p.outer_bias.at(h, q, k))) *
                 keys.at(k, h * d + e);
        }
        out.at(q, h * d + e) = static_cast<double>(acc);
      }
    }
  return out;
}

Tensor64 sw_mska_map(const Tensor64& query, const Tensor64& kv, const MskaParams& p) {
  const i64 H = query.dim(0), W = query.dim(1), C = query.dim(2), M = p.window, s = M / 2;
  expect(kv.dims() == query.dims() && H % M == 0 && W % M == 0, "sw_mska_map shapes");
  const WindowGrid grid{H, W, M, s};
  Tensor64 out(query.dims());
  for (i64 wi = 0; wi < H / M; ++wi)
    for (i64 wj = 0; wj < W / M; ++wj) {
      Tensor64 fq({M * M, C}), fk({M * M, C});
      std::vector<std::pair<i64, i64>> src;
      for (i64 t = 0; t < M * M; ++t) {
        const auto [r, c] = window_token_pixel(t, wi, wj, M);
        const i64 sr = (r + s) % H, sc = (c + s) % W;
        src.emplace_back(sr, sc);
        for (i64 ch = 0; ch < C; ++ch) {
          fq.at(t, ch) = query.at(sr, sc, ch);
          fk.at(t, ch) = kv.at(sr, sc, ch);
        }
      }
      const Tensor mask = standard_window_mask(grid, wi, wj);
      const Tensor64 o = mska(fq, fk, p, &mask);
      for (i64 t = 0; t < M * M; ++t)
        for (i64 ch = 0; ch < C; ++ch) out.at(src[static_cast<std::size_t>(t)].first,
                                               src[static_cast<std::size_t>(t)].second, ch) = o.at(t, ch);
    }
  return out;
}

std::vector<SuiteResult> run_selftests() {
  std::vector<SuiteResult> results;
  auto run = [&](const std::string& name, const auto& body) {
    SuiteResult r{name, false, ""};
    try {
      r.detail = body();
      r.passed = r.detail.rfind("FAIL", 0) != 0;
    } catch (const std::exception& e) {
      r.detail = std::string("FAIL exception: ") + e.what();
    }
    results.push_back(std::move(r));
  };

  run("masks", [] {
    int grids = 0;
    for (i64 M : {4, 8, 12})
      for (i64 nh = 2; nh <= 4; ++nh)
        for (i64 nw = 2; nw <= 4; ++nw)
          for (auto family : {MaskFamily::kStandard, MaskFamily::kLight}) {
            const WindowGrid grid{nh * M, nw * M, M, M / 2};
            const auto cmp = compare_masks(grid, family);
            if (!cmp.equal || cmp.distinct != 4) {
              return "FAIL M=" + std::to_string(M) + " grid " + std::to_string(nh) + "x" +
                     std::to_string(nw) + ": " + cmp.detail + " distinct=" +
                     std::to_string(cmp.distinct);
            }
            ++grids;
          }
    return std::to_string(grids) + " grids match, 4 distinct masks each";
  });

  run("pixel_shuffle", [] {
    const Tensor64 x = Rng(11).normal_tensor({6, 6, 8}, 1.0);
    const Tensor64 y = muster::pixel_shuffle(x, 2);
    if (!y.identical(pixel_shuffle(x, 2))) return std::string("FAIL shuffle differs from oracle");
    if (!muster::pixel_unshuffle(y, 2).identical(x)) return std::string("FAIL round trip");
    auto a = x.storage(), b = y.storage();
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a != b) return std::string("FAIL value multiset changed");
    return std::string("bijective on 6x6x8");
  });

  run("mska_msa", [] {
    double worst = 0;
    for (i64 heads : {1, 2}) {
      const MskaParams p = MskaParams::random(8, heads, 4, 21 + static_cast<std::uint64_t>(heads), 0.3, 0.3);
      const Tensor64 x = Rng(5).normal_tensor({16, 8}, 1.0);
      worst = std::max(worst, max_abs_diff(w_mska(x, x, p), msa(x, p)));
    }
    if (!(worst < 1e-6)) return "FAIL max diff " + fmt(worst);
    return "max diff " + fmt(worst);
  });

  run("attention_oracle", [] {
    double worst = 0;
    for (i64 M : {2, 4})
      for (i64 heads : {1, 2}) {
        const auto seed = static_cast<std::uint64_t>(M * 10 + heads);
        const MskaParams p = MskaParams::random(8, heads, M, seed, 0.3, 0.3);
        const Tensor64 f = Rng(seed + 1).normal_tensor({M * M, 8}, 1.0);
        const Tensor64 m = Rng(seed + 2).normal_tensor({M * M, 8}, 1.0);
        worst = std::max(worst, max_abs_diff(w_mska(f, m, p), mska(f, m, p, nullptr)));

        const LightAttnParams lp = LightAttnParams::random(8, heads, M, seed, 0.3);
        const Tensor64 k = Rng(seed + 3).normal_tensor({M * M / 4, 8}, 1.0);
        worst = std::max(worst, max_abs_diff(light_attention(f, k, lp), light(f, k, lp, nullptr)));
      }
    if (!(worst < 1e-6)) return "FAIL max diff " + fmt(worst);
    return "max diff " + fmt(worst);
  });

  run("flop_instrumentation", [] {
    for (auto variant : {Variant::kMuster, Variant::kLight}) {
      DecoderConfig cfg;
      cfg.base_channels = 8;
      cfg.window = 4;
      cfg.variant = variant;
      cfg.num_classes = 3;
      cfg.stages = {{16, 2}, {8, 1}};
      const auto feats = synth_backbone(cfg, 40, 40);
      const auto params = init_params(cfg);
      std::uint64_t counted = 0;
      {
        MacCounter counter;
        decoder_forward(feats, cfg, params);
        counted = counter.macs();
      }
      const auto report = count_model(cfg, 10, 10);
      if (counted != report.total_macs) {
        return "FAIL " + std::string(to_string(variant)) + ": kernels " + std::to_string(counted) +
               " vs analyzer " + std::to_string(report.total_macs);
      }
    }
    return std::string("kernel MAC counter equals analyzer for both variants");
  });

  return results;
}

}  // namespace muster::oracle
