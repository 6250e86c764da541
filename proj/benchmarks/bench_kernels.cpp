// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "muster/attention.hpp"
#include "muster/kernels.hpp"
#include "muster/rng.hpp"
#include "muster/windowing.hpp"

namespace muster {
namespace {

Tensor rand(Shape dims, std::uint64_t seed) { return Rng(seed).normal_tensor(std::move(dims), 1.0).cast<float>(); }

void BM_Matmul(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  const Tensor a = rand({n, n}, 1), b = rand({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

void BM_Softmax(benchmark::State& state) {
  const Tensor x = rand({144, 144}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(softmax_rows(x));
}
BENCHMARK(BM_Softmax);

void BM_PixelShuffle(benchmark::State& state) {
  const Tensor x = rand({24, 24, 512}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(pixel_shuffle(x, 2));
}
BENCHMARK(BM_PixelShuffle);

void BM_WindowPartition(benchmark::State& state) {
  const Tensor x = rand({48, 48, 128}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(window_partition(cyclic_shift(x, 6), 12));
}
BENCHMARK(BM_WindowPartition);

void BM_BuildMasks(benchmark::State& state) {
  const std::int64_t m = state.range(0);
  for (auto _ : state) benchmark::DoNotOptimize(build_sw_mask({4 * m, 4 * m, m, m / 2}));
}
BENCHMARK(BM_BuildMasks)->Arg(4)->Arg(12);

void BM_WMska(benchmark::State& state) {
  const MskaParams p = MskaParams::random(128, 4, 12, 6);
  const Tensor f = rand({144, 128}, 7), m = rand({144, 128}, 8);
  for (auto _ : state) benchmark::DoNotOptimize(w_mska(f, m, p));
}
BENCHMARK(BM_WMska);

void BM_LightAttention(benchmark::State& state) {
  const LightAttnParams p = LightAttnParams::random(128, 4, 12, 9);
  const Tensor x = rand({144, 128}, 10), k = rand({36, 128}, 11);
  for (auto _ : state) benchmark::DoNotOptimize(light_attention(x, k, p));
}
BENCHMARK(BM_LightAttention);

}  // namespace
}  // namespace muster
