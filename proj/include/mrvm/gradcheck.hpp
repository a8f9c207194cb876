// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mrvm/config.hpp"
#include "mrvm/diffcore.hpp"

/// Finite-difference audits of the differentiable pieces on tiny inputs.
namespace mrvm::gradcheck {

inline constexpr double kStep = 1e-5;
/// Step of the extrapolated differences used on the full pipeline.
inline constexpr double kPipelineStep = 1e-3;
inline constexpr double kTolerance = 1e-4;

struct Entry {
  std::string name;
  diff::FdReport report;
  bool passed() const { return report.max_rel_error <= kTolerance; }
};

/// One randomized scalar composition per op kind.
std::vector<Entry> check_ops(std::uint64_t seed);

/// Encoder -> trunk -> pool -> decode -> composite on one ray with four
/// coarse points and two reference views; the latent objective (standard,
/// featmask1 or featmask2) is added with masking when not off.
Entry check_pipeline(std::uint64_t seed, MrvmMode objective);

/// Every check above.
std::vector<Entry> check_all(std::uint64_t seed);

}  // namespace mrvm::gradcheck
