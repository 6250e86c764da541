// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>

#include "muster/tensor.hpp"

namespace muster {

/// splitmix64 stream. Uniforms take the top 53 bits; normals use Box-Muller
/// with the second variate cached.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  /// Independent stream keyed by (seed, tag), so parameter draws do not
  /// depend on initialization order.
  static Rng derive(std::uint64_t seed, std::string_view tag);

  std::uint64_t next_u64();
  double uniform();  // [0, 1)
  double normal(double mean = 0.0, double stddev = 1.0);

  Tensor64 normal_tensor(Shape dims, double stddev);

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace muster
