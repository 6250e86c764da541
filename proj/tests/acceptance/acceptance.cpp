// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Each criterion also has a wall-clock budget.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "muster/analyzer.hpp"
#include "muster/attention.hpp"
#include "muster/decoder.hpp"
#include "muster/kernels.hpp"
#include "muster/rng.hpp"
#include "muster/windowing.hpp"
#include "oracle.hpp"

namespace fs = std::filesystem;

namespace muster {
namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

Tensor64 normal64(Shape dims, std::uint64_t seed, double stddev = 1.0) {
  return Rng(seed).normal_tensor(std::move(dims), stddev);
}

Tensor random_mask(std::int64_t tq, std::int64_t tk, std::uint64_t seed) {
  Rng rng(seed);
  Tensor m({tq, tk});
  for (std::int64_t q = 0; q < tq; ++q) {
    const auto keep = static_cast<std::int64_t>(rng.next_u64() % static_cast<std::uint64_t>(tk));
    for (std::int64_t k = 0; k < tk; ++k) {
      if (k != keep && rng.uniform() < 0.4) m.at(q, k) = -std::numeric_limits<float>::infinity();
    }
  }
  return m;
}

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << x;
  return s.str();
}

Outcome mask_oracle() {
  int grids = 0;
  for (std::int64_t M : {4, 8, 12})
    for (std::int64_t nh = 2; nh <= 4; ++nh)
      for (std::int64_t nw = 2; nw <= 4; ++nw)
        for (auto family : {MaskFamily::kStandard, MaskFamily::kLight}) {
          const auto cmp = oracle::compare_masks({nh * M, nw * M, M, M / 2}, family);
          if (!cmp.equal) return {false, "M=" + std::to_string(M) + ": " + cmp.detail};
          if (cmp.distinct != 4) {
            return {false, "M=" + std::to_string(M) + ": " + std::to_string(cmp.distinct) +
                               " distinct masks"};
          }
          ++grids;
        }
  return {true, std::to_string(grids) + " grids, both families, 4 distinct masks each"};
}

Outcome mska_msa() {
  double worst = 0.0;
  for (std::int64_t M : {4, 12})
    for (std::int64_t heads : {1, 4}) {
      const auto seed = static_cast<std::uint64_t>(M * 10 + heads);
      const MskaParams p = MskaParams::random(32, heads, M, seed, 0.2, 0.2);
      const Tensor64 x = normal64({M * M, 32}, seed + 1);
      worst = std::max(worst, max_abs_diff(w_mska(x, x, p), oracle::msa(x, p)));
    }
  return {worst < 1e-6, "max |MSKA(F,F) - MSA(F)| = " + fmt(worst)};
}

Outcome attention_oracle() {
  double worst_mska = 0.0, worst_light = 0.0;
  for (std::int64_t M : {2, 4})
    for (std::int64_t heads : {1, 2}) {
      const auto seed = static_cast<std::uint64_t>(100 * M + heads);
      const MskaParams mp = MskaParams::random(8, heads, M, seed, 0.3, 0.3);
      const LightAttnParams lp = LightAttnParams::random(8, heads, M, seed + 7, 0.3);
      const Tensor64 f = normal64({M * M, 8}, seed + 1), m = normal64({M * M, 8}, seed + 2);
      const Tensor64 k = normal64({M * M / 4, 8}, seed + 3);
      const AttentionMask full_mask{random_mask(M * M, M * M, seed + 4)};
      const AttentionMask light_mask{random_mask(M * M, M * M / 4, seed + 5)};
      worst_mska = std::max({worst_mska, max_abs_diff(w_mska(f, m, mp), oracle::mska(f, m, mp, nullptr)),
                             max_abs_diff(w_mska(f, m, mp, &full_mask),
                                          oracle::mska(f, m, mp, &full_mask.matrix))});
      worst_light = std::max(
          {worst_light, max_abs_diff(light_attention(f, k, lp), oracle::light(f, k, lp, nullptr)),
           max_abs_diff(light_attention(f, k, lp, &light_mask),
                        oracle::light(f, k, lp, &light_mask.matrix))});
    }
  return {worst_mska < 1e-6 && worst_light < 1e-6,
          "max error w_mska " + fmt(worst_mska) + ", light " + fmt(worst_light)};
}

Outcome gradients() {
  std::size_t groups = 0;
  double worst = 0.0;
  std::string worst_name;
  for (Variant v : {Variant::kMuster, Variant::kLight}) {
    DecoderConfig cfg;
    cfg.base_channels = 16;
    cfg.window = 4;
    cfg.variant = v;
    cfg.num_classes = 4;
    cfg.seed = 3;
    cfg.stages = {{32, 8}, {16, 4}};
    // 24x24 patches on the finest level.
    for (const auto& g : decoder_gradcheck(cfg, 96, 96, kDefaultFdEpsilon, 6)) {
      ++groups;
      if (g.max_rel_error >= worst) {
        worst = g.max_rel_error;
        worst_name = std::string(to_string(v)) + ":" + g.name;
      }
    }
  }
  return {worst < 1e-3, std::to_string(groups) + " groups, worst " + fmt(worst) + " (" +
                            worst_name + ")"};
}

Outcome shape_law() {
  std::ostringstream s;
  for (std::int64_t c : {16, 32, 128}) {
    DecoderConfig cfg;
    cfg.base_channels = c;
    const auto plan = plan_shapes(cfg, 384, 384);
    const std::vector<std::int64_t> want_c{4 * c, 2 * c, c, 2 * c}, want_rate{16, 8, 4, 4};
    for (std::size_t i = 0; i < 4; ++i) {
      if (plan[i].fused[2] != want_c[i] || plan[i].rate != want_rate[i]) {
        return {false, "C=" + std::to_string(c) + " stage " + std::to_string(i) + " gives " +
                           shape_string(plan[i].fused)};
      }
    }
    if (c == 128) {
      s << "C=128 channels [";
      for (std::size_t i = 0; i < 4; ++i) s << plan[i].fused[2] << (i < 3 ? "," : "]");
      s << " rates [16,8,4,4]";
    }
  }
  // The executed model must agree with the plan.
  DecoderConfig cfg;
  cfg.base_channels = 16;
  cfg.num_classes = 4;
  const auto out = decoder_forward(synth_backbone(cfg, 96, 96), cfg, init_params(cfg));
  const auto plan = plan_shapes(cfg, 96, 96);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (out.stages[i].fused.dims() != plan[i].fused) {
      return {false, "executed stage " + std::to_string(i) + " is " +
                         shape_string(out.stages[i].fused.dims())};
    }
  }
  s << "; executed C=16 forward matches plan";
  return {true, s.str()};
}

Outcome complexity_law() {
  double worst = 0.0;
  for (Variant v : {Variant::kMuster, Variant::kLight}) {
    DecoderConfig cfg;
    cfg.variant = v;
    worst = std::max(worst,
                     verify_complexity_law(cfg, {{24, 24}, {48, 24}, {48, 48}}).max_rel_residual);
  }
  bool ratio_ok = true;
  for (std::int64_t M : {4, 8, 12})
    for (std::int64_t c : {16, 32, 128}) {
      ratio_ok = ratio_ok && attention_score_macs_per_window(M, c, Variant::kMuster) ==
                                 4 * attention_score_macs_per_window(M, c, Variant::kLight);
    }
  DecoderConfig full;
  DecoderConfig light;
  light.variant = Variant::kLight;
  // 512x512 image: 128x128 patches on the finest level.
  const auto a = count_model(full, 128, 128), b = count_model(light, 128, 128);
  const double pct = light_reduction_percent(full, 128, 128);
  std::ostringstream s;
  s.precision(4);
  s << "affine residual " << fmt(worst) << ", per-window score ratio "
    << (ratio_ok ? "4 exactly" : "NOT 4") << ", light " << b.total_flops() << " < muster "
    << a.total_flops() << " FLOPs (" << pct << "% lower; reference figure 18%)";
  return {worst < 1e-9 && ratio_ok && b.total_flops() < a.total_flops(), s.str()};
}

Outcome pixel_shuffle_bijection() {
  const Tensor x = normal64({6, 6, 256}, 11).cast<float>();
  const Tensor y = pixel_shuffle(x, 2);
  if (y.dims() != Shape{12, 12, 64}) return {false, "shape " + shape_string(y.dims())};
  if (!pixel_unshuffle(y, 2).identical(x)) return {false, "round trip not bit-exact"};
  auto xs = x.data(), ys = y.data();
  std::vector<float> a(xs.begin(), xs.end()), b(ys.begin(), ys.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a != b) return {false, "value multiset changed"};
  const Tensor z = normal64({5, 3, 8}, 12).cast<float>();
  if (!pixel_shuffle(pixel_unshuffle(pixel_shuffle(z, 2), 2), 2).identical(pixel_shuffle(z, 2))) {
    return {false, "unshuffle then shuffle not bit-exact"};
  }
  return {true, "[6,6,256] -> [12,12,64], round trip bit-exact, multiset preserved"};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
#ifndef MUSTER_CLI_PATH
  return {false, "CLI not built"};
#else
  const fs::path dir = fs::temp_directory_path() / ("muster_accept_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  {
    std::ofstream cfg(dir / "config.json");
    cfg << R"({"image": {"h": 96, "w": 96}, "base_channels": 32, "num_classes": 8, "seed": 7})";
  }
  const std::string cli = MUSTER_CLI_PATH;
  const std::string base = " --config " + (dir / "config.json").string();
  auto sh = [&](const std::string& cmd) {
    return std::system((cmd + " > " + (dir / "log.txt").string() + " 2>&1").c_str());
  };
  if (sh(cli + " gen-features" + base + " --out " + (dir / "feats").string()) != 0) {
    return {false, "gen-features failed: " + slurp(dir / "log.txt")};
  }
  const std::vector<std::pair<std::string, std::string>> runs{
      {"1", "a.mtsr"}, {"1", "b.mtsr"}, {"4", "c.mtsr"}};
  for (const auto& [threads, name] : runs) {
    const std::string cmd = "MUSTER_THREADS=" + threads + " " + cli + " forward" + base +
                            " --features " + (dir / "feats").string() + " --out " +
                            (dir / name).string();
    if (sh(cmd) != 0) return {false, "forward failed: " + slurp(dir / "log.txt")};
  }
  const std::string a = slurp(dir / "a.mtsr"), b = slurp(dir / "b.mtsr"), c = slurp(dir / "c.mtsr");
  fs::remove_all(dir);
  if (a.empty()) return {false, "empty logits file"};
  if (a != b) return {false, "two runs differ"};
  if (a != c) return {false, "MUSTER_THREADS=1 and 4 differ"};
  return {true, "3 runs byte-identical (" + std::to_string(a.size()) + " bytes), threads 1 and 4"};
#endif
}

Outcome ablation() {
  std::ostringstream s;
  for (Variant v : {Variant::kMuster, Variant::kLight}) {
    Shape logits;
    std::vector<Shape> stages;
    for (Upsampler u : {Upsampler::kFuse, Upsampler::kBilinear, Upsampler::kTransConv,
                        Upsampler::kSelfConcat}) {
      DecoderConfig cfg;
      cfg.base_channels = 16;
      cfg.num_classes = 6;
      cfg.variant = v;
      cfg.upsampler = u;
      const auto out = decoder_forward(synth_backbone(cfg, 96, 96), cfg, init_params(cfg));
      std::vector<Shape> st;
      for (const auto& o : out.stages) st.push_back(o.fused.dims());
      if (logits.empty()) {
        logits = out.logits.dims();
        stages = st;
      } else if (out.logits.dims() != logits || st != stages) {
        return {false, std::string(to_string(u)) + " shape differs under " + to_string(v)};
      }
    }
    s << to_string(v) << " logits " << shape_string(logits) << "; ";
  }
  s << "all four upsamplers agree";
  return {true, s.str()};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace
}  // namespace muster

int main() {
  using namespace muster;
  const std::vector<Criterion> criteria{
      {1, "mask-oracle equivalence", 5.0, mask_oracle},
      {2, "MSKA equals MSA when F = M", 1.0, mska_msa},
      {3, "attention matches scalar oracle", 5.0, attention_oracle},
      {4, "gradient checks on 2-stage toy decoder", 60.0, gradients},
      {5, "stage shape law", 5.0, shape_law},
      {6, "complexity law", 5.0, complexity_law},
      {7, "pixel-shuffle bijection", 1.0, pixel_shuffle_bijection},
      {8, "forward determinism", 30.0, determinism},
      {9, "ablation shape comparability", 10.0, ablation},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = secs <= c.budget_s;
    const bool ok = o.passed && in_budget;
    failures += ok ? 0 : 1;
    std::printf("[%s] %d %s (%.2fs / %.0fs budget): %s%s\n", ok ? "PASS" : "FAIL", c.id, c.name,
                secs, c.budget_s, o.detail.c_str(), in_budget ? "" : " [over budget]");
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
