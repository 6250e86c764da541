// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0

#include "muster/analyzer.hpp"

#include <cmath>
#include <set>

#include "muster/error.hpp"
#include "muster/windowing.hpp"

namespace muster {

namespace {

using u64 = std::uint64_t;

u64 U(std::int64_t v) { return static_cast<u64>(v); }

class Counter {
 public:
  Counter(FlopReport& report, std::int64_t stage) : report_(report), stage_(stage) {}

  FlopEntry& add(std::string op, u64 macs, u64 elementwise, u64 params, bool attention = false) {
    report_.entries.push_back({std::move(op), stage_, macs, elementwise, params, attention});
    return report_.entries.back();
  }

 private:
  FlopReport& report_;
  std::int64_t stage_;
};

void count_attention(Counter& k, const std::string& name, std::int64_t hi, std::int64_t wi,
                     std::int64_t c, std::int64_t heads, std::int64_t M, Variant variant,
                     bool shifted) {
  const u64 np = U(padded_extent(hi, M) * padded_extent(wi, M));
  const u64 cc = U(c), hh = U(heads), mm = U(M * M);
  if (variant == Variant::kMuster) {
    const u64 logits = np * hh * mm;  // nW * heads * M^2 * M^2
    k.add(name + ".qkv_proj", 3 * np * cc * cc, 0, 3 * cc * cc);
    k.add(name + ".scores", np * mm * cc, kAddFlops * logits * (shifted ? 3 : 2),
          U((2 * M - 1) * (2 * M - 1)) * hh, true);
    k.add(name + ".softmax", 0, kSoftmaxFlops * logits, 0);
    k.add(name + ".weighted_values", np * mm * cc, 0, 0, true);
    k.add(name + ".out_proj", np * cc * cc, 0, cc * cc);
  } else {
    const u64 keys = mm / 4;
    const u64 logits = np * hh * keys;
    k.add(name + ".q_proj", np * cc * cc, 0, cc * cc);
    k.add(name + ".kv_downsample", (np / 4) * 4 * cc, kAddFlops * (np / 4) * cc, 5 * cc);
    k.add(name + ".scores", np * keys * cc, kAddFlops * logits * (shifted ? 2 : 1),
          hh * mm * keys, true);
    k.add(name + ".softmax", 0, kSoftmaxFlops * logits, 0);
    k.add(name + ".weighted_values", np * keys * cc, kAddFlops * logits, hh * mm * keys, true);
  }
}

void count_block(Counter& k, std::int64_t hi, std::int64_t wi, std::int64_t c,
                 std::int64_t heads, std::int64_t M, Variant variant) {
  const u64 n = U(hi * wi), cc = U(c), hidden = U(kMlpRatio * c);
  auto norm = [&](const std::string& name) {
    k.add(name, 0, kLayerNormFlops * n * cc, 2 * cc);
  };
  auto mlp = [&](const std::string& name) {
    k.add(name + ".fc1", n * cc * hidden, (kAddFlops + kGeluFlops) * n * hidden,
          cc * hidden + hidden);
    k.add(name + ".fc2", n * hidden * cc, kAddFlops * n * cc, hidden * cc + cc);
  };
  norm("norm1");
  norm("norm1_kv");
  count_attention(k, "attn1", hi, wi, c, heads, M, variant, false);
  norm("norm2");
  mlp("mlp1");
  norm("norm3");
  norm("norm3_kv");
  count_attention(k, "attn2", hi, wi, c, heads, M, variant, true);
  norm("norm4");
  mlp("mlp2");
  k.add("residual", 0, kAddFlops * 4 * n * cc, 0);
}

}  // namespace

std::uint64_t attention_score_macs_per_window(std::int64_t window, std::int64_t channels,
                                              Variant variant) {
  if (window < 2 || window % 2 != 0 || channels < 1) {
    throw Error(ErrorCode::kConfig, "attention_score_macs_per_window: bad window or channels");
  }
  const u64 q = U(window * window);
  const u64 keys = variant == Variant::kMuster ? q : q / 4;
  return q * keys * U(channels);
}

FlopReport count_model(const DecoderConfig& cfg, std::int64_t h, std::int64_t w) {
  cfg.validate();
  const auto s = cfg.resolved_stages();
  const auto n = static_cast<std::int64_t>(s.size());
  const std::int64_t step = std::int64_t{1} << (n - 1);
  if (h < step || w < step || h % step != 0 || w % step != 0) {
    throw Error(ErrorCode::kConfig, "patch grid " + std::to_string(h) + "x" + std::to_string(w) +
                                        " must be a positive multiple of " + std::to_string(step));
  }

  FlopReport r;
  r.h = h;
  r.w = w;
  r.variant = cfg.variant;
  for (std::int64_t i = 0; i < n; ++i) {
    Counter k(r, i);
    const std::int64_t hi = h >> (n - 1 - i), wi = w >> (n - 1 - i);
    const std::int64_t c = s[static_cast<std::size_t>(i)].channels;
    count_block(k, hi, wi, c, s[static_cast<std::size_t>(i)].heads, cfg.window, cfg.variant);

    const u64 px = U(hi * wi), cc = U(c), next = U(cfg.stage_output_channels(i));
    if (i + 1 == n) {
      k.add("fuse", px * 2 * cc * next, kAddFlops * px * next, 2 * cc * next + next);
      continue;
    }
    switch (cfg.upsampler) {
      case Upsampler::kFuse:
      case Upsampler::kSelfConcat:
        k.add("fuse", px * 2 * cc * 4 * next, kAddFlops * px * 4 * next,
              2 * cc * 4 * next + 4 * next);
        break;
      case Upsampler::kBilinear:
        k.add("fuse", px * cc * next, kAddFlops * px * next + kBilinearFlops * 4 * px * next,
              cc * next + next);
        break;
      case Upsampler::kTransConv:
        k.add("fuse", px * 4 * cc * next, kAddFlops * 4 * px * next, 4 * cc * next + next);
        break;
    }
  }
  {
    Counter k(r, n);
    const u64 px = U(h * w), cin = U(cfg.stage_output_channels(n - 1)), classes = U(cfg.num_classes);
    k.add("classifier", px * cin * classes, kAddFlops * px * classes, cin * classes + classes);
    k.add("final_upsample", 0, kBilinearFlops * 16 * px * classes, 0);
  }

  r.stage_macs.assign(static_cast<std::size_t>(n + 1), 0);
  r.stage_flops.assign(static_cast<std::size_t>(n + 1), 0);
  for (const auto& e : r.entries) {
    r.stage_macs[static_cast<std::size_t>(e.stage)] += e.macs;
    r.stage_flops[static_cast<std::size_t>(e.stage)] += 2 * e.macs + e.elementwise_flops;
    r.total_macs += e.macs;
    r.total_elementwise_flops += e.elementwise_flops;
    r.total_params += e.params;
    (e.attention_term ? r.attention_macs : r.projection_macs) += e.macs;
  }
  return r;
}

ComplexityFit verify_complexity_law(
    const DecoderConfig& cfg, const std::vector<std::pair<std::int64_t, std::int64_t>>& sizes) {
  if (sizes.size() < 3) {
    throw Error(ErrorCode::kDegenerateInput, "complexity fit needs at least 3 sizes, got " +
                                                 std::to_string(sizes.size()));
  }
  std::set<std::int64_t> areas;
  for (const auto& [h, w] : sizes) areas.insert(h * w);
  if (areas.size() < 2) {
    throw Error(ErrorCode::kDegenerateInput, "complexity fit needs at least 2 distinct areas");
  }

  ComplexityFit fit;
  long double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [h, w] : sizes) {
    const auto x = static_cast<long double>(h * w);
    const auto y = static_cast<long double>(count_model(cfg, h, w).total_flops());
    fit.points.emplace_back(static_cast<double>(x), static_cast<double>(y));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const auto n = static_cast<long double>(sizes.size());
  const long double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const long double intercept = (sy - slope * sx) / n;
  fit.slope = static_cast<double>(slope);
  fit.intercept = static_cast<double>(intercept);
  for (const auto& [x, y] : fit.points) {
    const long double pred = slope * static_cast<long double>(x) + intercept;
    const auto rel = static_cast<double>(std::fabs(pred - static_cast<long double>(y)) /
                                         static_cast<long double>(y));
    fit.max_rel_residual = std::max(fit.max_rel_residual, rel);
  }
  return fit;
}

double light_reduction_percent(DecoderConfig cfg, std::int64_t h, std::int64_t w) {
  cfg.variant = Variant::kMuster;
  const auto muster = static_cast<double>(count_model(cfg, h, w).total_flops());
  cfg.variant = Variant::kLight;
  const auto light = static_cast<double>(count_model(cfg, h, w).total_flops());
  return 100.0 * (1.0 - light / muster);
}

}  // namespace muster
