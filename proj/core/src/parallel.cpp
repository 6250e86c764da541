// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0

#include "muster/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace muster {

namespace {

constexpr std::int64_t kMinWorkPerThread = 1 << 16;

int threads_from_env() {
  if (const char* env = std::getenv("MUSTER_THREADS")) {
    try {
      return std::max(1, std::stoi(env));
    } catch (...) {
      return 1;
    }
  }
  return 1;
}

std::atomic<int>& thread_setting() {
  static std::atomic<int> n{threads_from_env()};
  return n;
}

std::atomic<bool> g_counting{false};
std::atomic<std::uint64_t> g_macs{0};

}  // namespace

int num_threads() { return thread_setting().load(std::memory_order_relaxed); }

void set_num_threads(int n) { thread_setting().store(std::max(1, n)); }

void parallel_for(std::int64_t n, std::int64_t cost_per_item,
                  const std::function<void(std::int64_t, std::int64_t)>& body) {
  if (n <= 0) return;
  const std::int64_t work = n * std::max<std::int64_t>(1, cost_per_item);
  const std::int64_t by_work = std::max<std::int64_t>(1, work / kMinWorkPerThread);
  const std::int64_t threads = std::min<std::int64_t>({num_threads(), n, by_work});
  if (threads <= 1) {
    body(0, n);
    return;
  }
  const std::int64_t chunk = (n + threads - 1) / threads;
  std::vector<std::jthread> workers;
  workers.reserve(static_cast<std::size_t>(threads - 1));
  for (std::int64_t t = 1; t < threads; ++t) {
    const std::int64_t begin = t * chunk;
    const std::int64_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    workers.emplace_back([&body, begin, end] { body(begin, end); });
  }
  body(0, std::min(n, chunk));
}

MacCounter::MacCounter() {
  g_macs.store(0);
  g_counting.store(true);
}

MacCounter::~MacCounter() { g_counting.store(false); }

std::uint64_t MacCounter::macs() const { return g_macs.load(); }

namespace detail {

bool mac_counting_enabled() noexcept { return g_counting.load(std::memory_order_relaxed); }

void add_macs(std::uint64_t n) noexcept { g_macs.fetch_add(n, std::memory_order_relaxed); }

}  // namespace detail

}  // namespace muster
