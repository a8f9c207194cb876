// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "mrvm/config.hpp"
#include "mrvm/diffcore.hpp"

namespace mrvm {

/// Every parameter of one network: encoder, mask token, both branches and,
/// while pretraining, the latent heads and their EMA targets.
struct Model {
  ModelConfig config;
  MrvmMode mode = MrvmMode::standard;
  diff::ParamStore params;
};

Model init_model(const ModelConfig& config, MrvmMode mode, std::uint64_t seed);

/// EMA-only parameters, never touched by the optimizer.
bool is_ema_target(const std::string& name);
/// Pretraining-only parameters (heads and their targets).
bool is_pretrain_head(const std::string& name);

/// Drops every pretraining head and switches the objective off.
void strip_heads(Model& model);

}  // namespace mrvm
