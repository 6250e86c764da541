// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "muster/analyzer.hpp"
#include "muster/decoder.hpp"

namespace muster {
namespace {

void BM_DecoderForward(benchmark::State& state) {
  DecoderConfig cfg;
  cfg.base_channels = 32;
  cfg.num_classes = 16;
  cfg.variant = state.range(0) == 0 ? Variant::kMuster : Variant::kLight;
  const auto feats = synth_backbone(cfg, 192, 192);
  const auto params = init_params(cfg);
  for (auto _ : state) benchmark::DoNotOptimize(decoder_forward(feats, cfg, params));
  state.SetLabel(to_string(cfg.variant));
}
BENCHMARK(BM_DecoderForward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_CountModel(benchmark::State& state) {
  const DecoderConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(count_model(cfg, 128, 128));
}
BENCHMARK(BM_CountModel);

}  // namespace
}  // namespace muster
