// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0

#include "muster/rng.hpp"

#include <cmath>
#include <numbers>

namespace muster {

namespace {

std::uint64_t mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Rng Rng::derive(std::uint64_t seed, std::string_view tag) {
  // FNV-1a over the tag, then folded into the seed.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return Rng(mix(seed ^ mix(h)));
}

std::uint64_t Rng::next_u64() {
  state_ += 0x9e3779b97f4a7c15ULL;
  return mix(state_);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal(double mean, double stddev) {
  if (has_spare_) {
    has_spare_ = false;
    return mean + stddev * spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(theta);
  has_spare_ = true;
  return mean + stddev * radius * std::cos(theta);
}

Tensor64 Rng::normal_tensor(Shape dims, double stddev) {
  Tensor64 t(std::move(dims));
  for (auto& v : t.data()) v = normal(0.0, stddev);
  return t;
}

}  // namespace muster
