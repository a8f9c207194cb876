// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "mrvm/diffcore.hpp"
#include "mrvm/rng.hpp"

/// Two-level random masking of fine-stage tokens: points along a ray, then
/// a subset of reference views per selected point.
namespace mrvm::masking {

struct MaskPlan {
  std::size_t n_points = 0;
  std::size_t n_views = 0;
  /// Ascending point indices.
  std::vector<std::size_t> masked_points;
  /// masked_views[k]: ascending, non-empty view subset of masked_points[k].
  std::vector<std::vector<std::size_t>> masked_views;

  bool empty() const { return masked_points.empty(); }
  std::size_t masked_token_count() const;
  /// One flag per (point, view) token row, row index point * n_views + view.
  std::vector<std::uint8_t> row_flags() const;
};

/// round(eta * n_points) points without replacement; for each, k ~ U{1..S}
/// views, then a uniform k-subset of them.
MaskPlan sample_mask_plan(std::size_t n_points, std::size_t n_views, double eta, Rng& rng);

/// Replaces exactly the planned token rows with the mask token (1 x D).
/// `tokens` has n_points * n_views rows in (point, view) order.
diff::Var apply_mask(diff::Var tokens, const MaskPlan& plan, diff::Var mask_token);

}  // namespace mrvm::masking
