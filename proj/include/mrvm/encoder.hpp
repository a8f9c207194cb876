// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "mrvm/config.hpp"
#include "mrvm/diffcore.hpp"
#include "mrvm/geometry.hpp"
#include "mrvm/image.hpp"
#include "mrvm/rng.hpp"

/// Reference-view feature extraction and per-point token construction.
namespace mrvm::encoder {

using diff::Bindings;
using diff::Var;

/// Adds enc.* parameters and the shared mask token.
void init_params(diff::ParamStore& store, const ModelConfig& config, Rng& rng);

/// Two 3x3 same-padding convolutions (nonlinearity after the first) over
/// each image. Returns the feature maps stacked view after view:
/// (S*H*W x feature_dim). All images must share one size.
Var encode_views(const Bindings& params, std::span<const Image* const> images,
                 const ModelConfig& config);

/// Value-only convenience for a single view: (H*W x feature_dim).
diff::Tensor encode_view(const diff::ParamStore& params, const Image& image,
                         const ModelConfig& config);

/// The S reference views a batch of points is projected into.
struct ReferenceViews {
  std::vector<geometry::Camera> cameras;
  std::vector<const Image*> images;
  std::vector<int> view_ids;  // dataset indices, for bookkeeping

  std::size_t size() const { return cameras.size(); }
  int height() const { return images.empty() ? 0 : images.front()->height; }
  int width() const { return images.empty() ? 0 : images.front()->width; }
};

struct TokenBatch {
  /// Rows ordered (point, view): row p*S + j.
  Var h;
  /// Same row order; 0 where the point lies behind the reference camera.
  std::vector<std::uint8_t> valid;
  std::size_t n_points = 0;
  std::size_t n_views = 0;
};

/// Projects every point into every reference view, samples image color and
/// features bilinearly, and merges them linearly into D_h-dim tokens.
/// Rows for points behind a camera carry the mask token instead.
TokenBatch gather_tokens(const Bindings& params, Var featmaps, const ReferenceViews& refs,
                         std::span<const geometry::Vec3> points);

struct Token {
  std::vector<double> h;
  bool valid = false;
  int view_index = 0;
  int point_index = 0;
};

/// Single point, single view, value-only.
Token gather_token(const diff::ParamStore& params, const geometry::Vec3& point,
                   const geometry::Camera& camera, const Image& image,
                   const diff::Tensor& featmap, int view_index = 0, int point_index = 0);

/// Appends sin/cos of 2^k * pi * depth (k = 0..3) to every token row; depth
/// is given per point in [0, 1].
Var append_depth_encoding(Var tokens, std::span<const double> depth01, std::size_t n_views);

}  // namespace mrvm::encoder
