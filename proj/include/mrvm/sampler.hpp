// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mrvm/geometry.hpp"
#include "mrvm/rng.hpp"

/// Hierarchical depth sampling along a ray.
namespace mrvm::sampler {

/// Weight floor for the importance PDF, used when the coarse weights carry
/// no usable mass.
inline constexpr double kWeightFloor = 1e-5;
/// Nudge applied to a depth that would duplicate an existing one on merge.
inline constexpr double kDuplicateNudge = 1e-9;

struct DepthSamples {
  std::vector<double> t;
  std::vector<std::uint8_t> is_coarse;
  double t_near = 0.0;
  double t_far = 0.0;

  std::size_t size() const { return t.size(); }
  /// t_{k+1} - t_k, with the last entry t_far - t_N.
  std::vector<double> deltas() const;
  /// Positions of the coarse entries, ascending.
  std::vector<std::size_t> coarse_indices() const;
};

/// One sample per equal-width bin of [t_near, t_far]: the midpoint, or a
/// uniform draw inside the bin when jitter is on (rng required then).
DepthSamples stratified(double t_near, double t_far, std::size_t n, Rng* rng, bool jitter);
DepthSamples stratified(const geometry::Ray& ray, std::size_t n, Rng* rng, bool jitter);

/// Inverse-CDF sampling of `n_extra` depths from the piecewise-constant PDF
/// whose bins are the equal-width coarse bins of [coarse.t_near,
/// coarse.t_far] and whose masses are the normalized weights.
std::vector<double> importance(const DepthSamples& coarse, std::span<const double> weights, std::size_t n_extra,
                               Rng& rng);

/// Sorted union; coarse entries keep their flag and their exact value.
DepthSamples merge(const DepthSamples& coarse, std::span<const double> extra);

}  // namespace mrvm::sampler
