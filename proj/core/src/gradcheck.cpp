// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0

#include "muster/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "muster/rng.hpp"

namespace muster {

namespace {

void check_eps(double eps) {
  if (!(eps >= 1e-6 && eps <= 1e-3)) {
    throw Error(ErrorCode::kConfig, "finite-difference eps must lie in [1e-6, 1e-3], got " +
                                        std::to_string(eps));
  }
}

double evaluate(const ParamMap& params, const LossBuilder& loss) {
  Tape<double> tape;
  ParamVars vars;
  for (const auto& [name, value] : params) vars.emplace(name, tape.parameter(name, value));
  const double v = tape.value(loss(tape, vars))[0];
  if (!std::isfinite(v)) {
    throw Error(ErrorCode::kEvaluation, "loss evaluated to a non-finite value");
  }
  return v;
}

std::vector<std::int64_t> pick_indices(std::int64_t n, std::int64_t samples, Rng& rng) {
  std::vector<std::int64_t> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  if (samples <= 0 || n <= samples) return all;
  std::set<std::int64_t> chosen{0, n - 1};
  while (static_cast<std::int64_t>(chosen.size()) < samples) {
    chosen.insert(static_cast<std::int64_t>(rng.next_u64() % static_cast<std::uint64_t>(n)));
  }
  return {chosen.begin(), chosen.end()};
}

}  // namespace

double gradient_rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
}

std::vector<GroupCheck> check_gradients(const ParamMap& params, const LossBuilder& loss,
                                        double eps, std::int64_t samples_per_group,
                                        std::uint64_t seed) {
  check_eps(eps);
  Tape<double> tape;
  ParamVars vars;
  for (const auto& [name, value] : params) vars.emplace(name, tape.parameter(name, value));
  const Var out = loss(tape, vars);
  if (!std::isfinite(tape.value(out)[0])) {
    throw Error(ErrorCode::kEvaluation, "loss evaluated to a non-finite value");
  }
  const Gradients<double> grads = tape.backward(out);

  std::vector<GroupCheck> results;
  ParamMap work = params;
  for (const auto& [name, value] : params) {
    Rng rng = Rng::derive(seed, name);
    const auto indices = pick_indices(value.size(), samples_per_group, rng);
    GroupCheck check{name, static_cast<std::int64_t>(indices.size()), 0.0};
    Tensor64& p = work.at(name);
    for (auto i : indices) {
      const double saved = p[i];
      p[i] = saved + eps;
      const double up = evaluate(work, loss);
      p[i] = saved - eps;
      const double down = evaluate(work, loss);
      p[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      check.max_rel_error =
          std::max(check.max_rel_error, gradient_rel_error(grads.at(name)[i], numeric));
    }
    results.push_back(std::move(check));
  }
  return results;
}

double finite_difference_check(const std::function<Var(Tape<double>&, Var)>& f,
                               const Tensor64& p, double eps) {
  const ParamMap params{{"p", p}};
  const auto results = check_gradients(
      params, [&f](Tape<double>& tape, const ParamVars& vars) { return f(tape, vars.at("p")); },
      eps, /*samples_per_group=*/0);
  return results.front().max_rel_error;
}

}  // namespace muster
