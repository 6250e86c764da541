// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "muster/analyzer.hpp"
#include "muster/parallel.hpp"
#include "test_util.hpp"

namespace muster {
namespace {

DecoderConfig table_config(Variant v) {
  DecoderConfig cfg;
  cfg.variant = v;
  return cfg;
}

TEST(Analyzer, ScoreMacsPerWindowRatioIsFour) {
  for (std::int64_t M : {4, 8, 12}) {
    const auto full = attention_score_macs_per_window(M, 32, Variant::kMuster);
    const auto light = attention_score_macs_per_window(M, 32, Variant::kLight);
    EXPECT_EQ(full, static_cast<std::uint64_t>(M * M * M * M * 32));
    EXPECT_EQ(full, 4 * light);
  }
}

TEST(Analyzer, TotalsEqualSumOfEntries) {
  for (Variant v : {Variant::kMuster, Variant::kLight}) {
    const FlopReport r = count_model(table_config(v), 24, 24);
    std::uint64_t macs = 0, elem = 0, params = 0, attn = 0;
    for (const auto& e : r.entries) {
      macs += e.macs;
      elem += e.elementwise_flops;
      params += e.params;
      if (e.attention_term) attn += e.macs;
    }
    EXPECT_EQ(macs, r.total_macs);
    EXPECT_EQ(elem, r.total_elementwise_flops);
    EXPECT_EQ(params, r.total_params);
    EXPECT_EQ(attn, r.attention_macs);
    EXPECT_EQ(r.attention_macs + r.projection_macs, r.total_macs);
    std::uint64_t staged = 0;
    for (auto m : r.stage_macs) staged += m;
    EXPECT_EQ(staged, r.total_macs);
    EXPECT_EQ(r.stage_macs.size(), 5u);
  }
}

TEST(Analyzer, ParamsMatchDecoderParameterSet) {
  for (Variant v : {Variant::kMuster, Variant::kLight}) {
    const DecoderConfig cfg = table_config(v);
    std::uint64_t want = 0;
    for (const auto& s : param_specs(cfg)) {
      std::uint64_t n = 1;
      for (auto d : s.shape) n *= static_cast<std::uint64_t>(d);
      want += n;
    }
    EXPECT_EQ(count_model(cfg, 24, 24).total_params, want);
  }
}

TEST(Analyzer, AttentionTermMatchesWindowAccounting) {
  // Unpadded maps: hw/M^2 windows of M^4 C score MACs each per block.
  DecoderConfig cfg;
  cfg.base_channels = 16;
  cfg.stages = {{32, 2}, {16, 2}};
  const FlopReport r = count_model(cfg, 48, 48);
  std::uint64_t want = 0;
  for (std::int64_t i = 0; i < 2; ++i) {
    const std::int64_t h = 48 >> (1 - i), c = cfg.stages[static_cast<std::size_t>(i)].channels;
    const std::uint64_t windows = static_cast<std::uint64_t>((h / 12) * (h / 12));
    // Two attention units per stage, scores plus weighted values in each.
    want += 2 * 2 * windows * attention_score_macs_per_window(12, c, Variant::kMuster);
  }
  EXPECT_EQ(r.attention_macs, want);
}

TEST(Analyzer, ExactlyAffineInArea) {
  for (Variant v : {Variant::kMuster, Variant::kLight}) {
    const ComplexityFit fit = verify_complexity_law(table_config(v), {{24, 24}, {48, 24}, {48, 48}});
    EXPECT_LT(fit.max_rel_residual, 1e-9);
    EXPECT_GT(fit.slope, 0.0);
    EXPECT_EQ(fit.points.size(), 3u);
  }
}

TEST(Analyzer, DoublingBothSidesQuadruplesFlops) {
  for (Variant v : {Variant::kMuster, Variant::kLight}) {
    const auto a = count_model(table_config(v), 96, 96);
    const auto b = count_model(table_config(v), 192, 192);
    EXPECT_EQ(b.total_flops(), 4 * a.total_flops());
    const auto c = count_model(table_config(v), 192, 96);
    EXPECT_EQ(c.attention_macs, 2 * a.attention_macs);
  }
}

TEST(Analyzer, LightCheaperThanMuster) {
  for (std::int64_t c : {16, 32, 128}) {
    DecoderConfig cfg;
    cfg.base_channels = c;
    const auto full = count_model(cfg, 24, 24);
    cfg.variant = Variant::kLight;
    const auto light = count_model(cfg, 24, 24);
    EXPECT_LT(light.total_flops(), full.total_flops());
  }
  const double pct = light_reduction_percent(table_config(Variant::kMuster), 128, 128);
  EXPECT_GT(pct, 0.0);
  EXPECT_LT(pct, 100.0);
}

TEST(Analyzer, MatchesInstrumentedKernels) {
  for (Upsampler u : {Upsampler::kFuse, Upsampler::kSelfConcat, Upsampler::kBilinear,
                      Upsampler::kTransConv})
    for (Variant v : {Variant::kMuster, Variant::kLight}) {
      DecoderConfig cfg;
      cfg.base_channels = 8;
      cfg.window = 4;
      cfg.variant = v;
      cfg.upsampler = u;
      cfg.num_classes = 3;
      cfg.stages = {{16, 2}, {12, 3}, {8, 1}};
      const auto feats = synth_backbone(cfg, 48, 32);
      const auto params = init_params(cfg);
      std::uint64_t counted = 0;
      {
        MacCounter counter;
        decoder_forward(feats, cfg, params);
        counted = counter.macs();
      }
      EXPECT_EQ(counted, count_model(cfg, 12, 8).total_macs) << to_string(v) << to_string(u);
    }
}

TEST(Analyzer, PureFunctionOfInputs) {
  const auto a = count_model(table_config(Variant::kLight), 48, 24);
  const auto b = count_model(table_config(Variant::kLight), 48, 24);
  EXPECT_EQ(a.total_flops(), b.total_flops());
  EXPECT_EQ(a.entries.size(), b.entries.size());
}

TEST(Analyzer, Errors) {
  EXPECT_THROW_CODE(count_model(table_config(Variant::kMuster), 20, 24), ErrorCode::kConfig);
  EXPECT_THROW_CODE(verify_complexity_law(table_config(Variant::kMuster), {{24, 24}, {48, 48}}),
                    ErrorCode::kDegenerateInput);
  EXPECT_THROW_CODE(
      verify_complexity_law(table_config(Variant::kMuster), {{24, 48}, {48, 24}, {24, 48}}),
      ErrorCode::kDegenerateInput);
}

}  // namespace
}  // namespace muster
