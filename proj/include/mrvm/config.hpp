// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "mrvm/geometry.hpp"

namespace mrvm {

enum class Activation { relu, softplus };

/// Which latent-space pretraining objective runs alongside rendering.
enum class MrvmMode {
  standard,   // coarse branch + EMA projector as target
  featmask1,  // reconstruct masked tokens from per-view fine latents
  featmask2,  // EMA copy of the fine trunk as target
  off,
};

std::string to_string(Activation a);
std::string to_string(MrvmMode m);
Activation activation_from_string(const std::string& s);
/// Accepts "default" as an alias of "standard".
MrvmMode mrvm_mode_from_string(const std::string& s);

/// Network sizes and sampling counts.
struct ModelConfig {
  int feature_dim = 16;
  int token_dim = 32;
  int trunk_width = 64;
  int latent_dim = 32;
  int head_width = 64;
  int proj_dim = 16;
  int proj_hidden = 32;
  int recon_hidden = 64;
  int n_coarse = 64;
  int n_fine_extra = 32;
  Activation activation = Activation::relu;
  /// Appends a 4-octave frequency encoding of normalized ray depth to
  /// every token.
  bool depth_encoding = false;
  /// Feeds a 2-octave frequency encoding of the ray direction to the
  /// color head.
  bool view_dirs = false;
  geometry::Vec3 background = geometry::Vec3::Ones();

  int n_fine() const { return n_coarse + n_fine_extra; }
  int trunk_input_dim() const { return token_dim + (depth_encoding ? 8 : 0); }
  int head_input_dim() const { return latent_dim + (view_dirs ? 15 : 0); }
  void validate() const;
};

}  // namespace mrvm
