// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrvm/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mrvm::masking {

namespace {

// First k entries of a partial Fisher-Yates shuffle of [0, n), sorted.
std::vector<std::size_t> choose(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + uniform_index(rng, n - i)]);
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace

std::size_t MaskPlan::masked_token_count() const {
  std::size_t n = 0;
  for (const auto& v : masked_views) n += v.size();
  return n;
}

std::vector<std::uint8_t> MaskPlan::row_flags() const {
  std::vector<std::uint8_t> flags(n_points * n_views, 0);
  for (std::size_t k = 0; k < masked_points.size(); ++k)
    for (std::size_t v : masked_views[k]) flags[masked_points[k] * n_views + v] = 1;
  return flags;
}

MaskPlan sample_mask_plan(std::size_t n_points, std::size_t n_views, double eta, Rng& rng) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw InvalidArgument("sample_mask_plan: mask ratio must lie in [0, 1]");
  if (n_views == 0) throw InvalidArgument("sample_mask_plan: need at least one view");
  MaskPlan plan;
  plan.n_points = n_points;
  plan.n_views = n_views;
  const auto count = static_cast<std::size_t>(std::llround(eta * static_cast<double>(n_points)));
  plan.masked_points = choose(n_points, std::min(count, n_points), rng);
  plan.masked_views.reserve(plan.masked_points.size());
  for (std::size_t i = 0; i < plan.masked_points.size(); ++i) {
    const std::size_t k = 1 + uniform_index(rng, n_views);
    plan.masked_views.push_back(choose(n_views, k, rng));
  }
  return plan;
}

diff::Var apply_mask(diff::Var tokens, const MaskPlan& plan, diff::Var mask_token) {
  if (tokens.rows() != plan.n_points * plan.n_views)
    throw InvalidArgument("apply_mask: plan covers " + std::to_string(plan.n_points) + "x" +
                          std::to_string(plan.n_views) + " tokens, tensor has " + std::to_string(tokens.rows()) +
                          " rows");
  for (std::size_t k = 0; k < plan.masked_points.size(); ++k) {
    if (plan.masked_points[k] >= plan.n_points) throw InvalidArgument("apply_mask: point index out of range");
    for (std::size_t v : plan.masked_views[k])
      if (v >= plan.n_views) throw InvalidArgument("apply_mask: view index out of range");
  }
  if (plan.empty()) return tokens;
  return diff::replace_rows(tokens, mask_token, plan.row_flags());
}

}  // namespace mrvm::masking
