// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrvm/config.hpp"

#include "mrvm/error.hpp"

namespace mrvm {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "softplus"; }

std::string to_string(MrvmMode m) {
  switch (m) {
    case MrvmMode::standard: return "default";
    case MrvmMode::featmask1: return "featmask1";
    case MrvmMode::featmask2: return "featmask2";
    case MrvmMode::off: return "off";
  }
  return "off";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "softplus") return Activation::softplus;
  throw InvalidArgument("unknown activation '" + s + "' (relu|softplus)");
}

MrvmMode mrvm_mode_from_string(const std::string& s) {
  if (s == "default" || s == "standard") return MrvmMode::standard;
  if (s == "featmask1") return MrvmMode::featmask1;
  if (s == "featmask2") return MrvmMode::featmask2;
  if (s == "off") return MrvmMode::off;
  throw InvalidArgument("unknown mrvm_mode '" + s + "' (default|featmask1|featmask2|off)");
}

void ModelConfig::validate() const {
  if (feature_dim < 1 || token_dim < 1 || trunk_width < 1 || latent_dim < 1 || head_width < 1 ||
      proj_dim < 1 || proj_hidden < 1 || recon_hidden < 1)
    throw InvalidArgument("model config: layer sizes must be positive");
  if (n_coarse < 1 || n_fine_extra < 0) throw InvalidArgument("model config: need n_coarse >= 1, n_fine_extra >= 0");
  if (!(background.array() >= 0.0).all() || !(background.array() <= 1.0).all())
    throw InvalidArgument("model config: background outside [0,1]");
}

}  // namespace mrvm
