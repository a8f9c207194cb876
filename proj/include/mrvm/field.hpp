// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>

#include "mrvm/config.hpp"
#include "mrvm/diffcore.hpp"
#include "mrvm/rng.hpp"

/// The conditioned radiance field of one branch: a per-token trunk, mean
/// pooling across reference views, and a density/color head.
namespace mrvm::field {

using diff::Bindings;
using diff::Var;

inline const std::string kCoarse = "coarse";
inline const std::string kFine = "fine";

/// Adds `<branch>.l1..l3` (trunk) and `<branch>.head1..head2` parameters.
void init_branch(diff::ParamStore& store, const std::string& branch, const ModelConfig& config, Rng& rng);

/// Maps every token row independently to a latent row: (rows x D_z).
Var trunk_forward(const Bindings& params, const std::string& branch, Var tokens, const ModelConfig& config);

/// Mean over each point's S consecutive view rows: (n*S x D) -> (n x D).
/// When `view_order` is given (one entry per row), rows are summed in
/// ascending view-index order so the result is bit-identical under any
/// permutation of the views.
Var pool_views(Var latents, std::size_t n_views, std::span<const int> view_order = {});

struct Decoded {
  Var sigma;  // (n x 1), softplus of the raw density
  Var color;  // (n x 3), sigmoid of the raw color
};

/// `dir_encoding` (n x 15) is required iff config.view_dirs.
Decoded decode(const Bindings& params, const std::string& branch, Var pooled, const ModelConfig& config,
               Var dir_encoding = {});

/// (n x 15): direction and sin/cos of 2^k * pi * direction, k = 0, 1.
diff::Tensor direction_encoding(std::span<const double> directions_xyz);

}  // namespace mrvm::field
