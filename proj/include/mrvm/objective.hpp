// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mrvm/config.hpp"
#include "mrvm/diffcore.hpp"
#include "mrvm/rng.hpp"

/// Latent-alignment pretraining objective: online projector + predictor on
/// the masked fine branch, EMA target projector on the unmasked coarse
/// branch, and the reconstruction / fine-copy ablation variants.
namespace mrvm::objective {

using diff::Bindings;
using diff::Var;

inline const std::string kOnlineProj = "proj.";
inline const std::string kPredictor = "pred.";
inline const std::string kTargetProj = "target_proj.";
inline const std::string kRecon = "recon.";
inline const std::string kFineTarget = "fine_target.";

/// Adds proj.*, pred.* and target_proj.* (a copy of proj.*), plus recon.*
/// for featmask1 or fine_target.* (a copy of the fine branch) for featmask2.
/// The fine branch must already exist for featmask2.
void init_heads(diff::ParamStore& store, const ModelConfig& config, MrvmMode mode, Rng& rng);

/// Pred(Proj(z)) with the online weights; differentiable end to end.
Var online_project_predict(const Bindings& params, Var z_fine, const ModelConfig& config);

/// Proj(z) with the target weights. z enters the tape as a constant and the
/// weights are bound without gradient, so nothing upstream of the target
/// receives gradient from the loss.
Var target_project(diff::Tape& tape, const diff::ParamStore& params, const diff::Tensor& z_coarse,
                   const ModelConfig& config);

/// target <- tau * target + (1 - tau) * online, for every online parameter
/// under `online_prefix` mirrored under `target_prefix`.
void ema_update(diff::ParamStore& store, const std::string& target_prefix, const std::string& online_prefix,
                double tau);

struct LossTerms {
  Var per_ray;                  // (R x 1)
  std::size_t degenerate = 0;   // pairs skipped for a near-zero norm
};

/// Mean over each ray's `pairs_per_ray` rows of |a/|a| - b/|b||^2. Pairs
/// where either norm is <= 1e-12 contribute 0 and are counted.
LossTerms alignment_loss(Var online, Var target, std::size_t pairs_per_ray);

/// Reconstruction loss for featmask1: decodes per-view fine latents at the
/// masked rows and compares unit-normalized reconstructions with the
/// unit-normalized original tokens. `ray_of_row` maps each latent row to its
/// ray; rays without masked rows get 0.
Var reconstruction_loss(const Bindings& params, Var view_latents, const diff::Tensor& original_tokens,
                        const std::vector<std::uint8_t>& masked_rows, const std::vector<std::size_t>& ray_of_row,
                        std::size_t n_rays, const ModelConfig& config);

}  // namespace mrvm::objective
