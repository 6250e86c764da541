// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0
//
// Row-partitioned parallelism. Work items are disjoint and each item is
// computed in a fixed order, so results never depend on the thread count.

#pragma once

#include <cstdint>
#include <functional>

namespace muster {

/// Defaults to $MUSTER_THREADS when set, otherwise 1.
int num_threads();
void set_num_threads(int n);

/// Calls body(begin, end) over a partition of [0, n). Runs inline when the
/// estimated work (n * cost_per_item) is small or only one thread is allowed.
void parallel_for(std::int64_t n, std::int64_t cost_per_item,
                  const std::function<void(std::int64_t, std::int64_t)>& body);

/// Multiply-accumulate instrumentation for the matmul/conv kernels. While a
/// MacCounter is alive, those kernels add the MACs they execute to it.
class MacCounter {
 public:
  MacCounter();
  ~MacCounter();
  MacCounter(const MacCounter&) = delete;
  MacCounter& operator=(const MacCounter&) = delete;

  std::uint64_t macs() const;
};

namespace detail {
bool mac_counting_enabled() noexcept;
void add_macs(std::uint64_t n) noexcept;
}  // namespace detail

}  // namespace muster
