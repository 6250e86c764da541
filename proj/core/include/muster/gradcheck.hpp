// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0
//
// Central-difference verification of Tape::backward in 64-bit mode.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "muster/autodiff.hpp"

namespace muster {

inline constexpr double kDefaultFdEpsilon = 1e-4;

using ParamMap = std::map<std::string, Tensor64>;
using ParamVars = std::map<std::string, Var>;

/// Builds a scalar loss on `tape` from already-registered parameters.
using LossBuilder = std::function<Var(Tape<double>& tape, const ParamVars& params)>;

struct GroupCheck {
  std::string name;
  std::int64_t elements = 0;  // entries compared
  double max_rel_error = 0.0;
};

/// |g_ad - g_fd| / max(1, |g_fd|) for one entry.
double gradient_rel_error(double analytic, double numeric);

/// Compares backward() against central differences for every parameter
/// group. Groups with more than `samples_per_group` entries are checked on a
/// seeded sample of entries (always including the first and last).
std::vector<GroupCheck> check_gradients(const ParamMap& params, const LossBuilder& loss,
                                        double eps = kDefaultFdEpsilon,
                                        std::int64_t samples_per_group = 8,
                                        std::uint64_t seed = 0);

/// Max relative error between backward() and central differences of f over
/// every entry of p. eps must lie in [1e-6, 1e-3].
double finite_difference_check(const std::function<Var(Tape<double>&, Var)>& f,
                               const Tensor64& p, double eps = kDefaultFdEpsilon);

}  // namespace muster
