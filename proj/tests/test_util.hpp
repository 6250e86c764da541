// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "muster/rng.hpp"
#include "muster/tensor.hpp"

namespace muster::testing {

inline Tensor64 random64(Shape dims, std::uint64_t seed, double stddev = 1.0) {
  return Rng(seed).normal_tensor(std::move(dims), stddev);
}

inline Tensor random32(Shape dims, std::uint64_t seed, double stddev = 1.0) {
  return random64(std::move(dims), seed, stddev).cast<float>();
}

}  // namespace muster::testing

#define EXPECT_THROW_CODE(stmt, expected_code)                                   \
  do {                                                                           \
    try {                                                                        \
      stmt;                                                                      \
      ADD_FAILURE() << "expected muster::Error from: " #stmt;                    \
    } catch (const ::muster::Error& e) {                                         \
      EXPECT_EQ(e.code(), expected_code) << e.what();                            \
    }                                                                            \
  } while (0)
