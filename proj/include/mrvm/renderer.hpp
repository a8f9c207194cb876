// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mrvm/diffcore.hpp"
#include "mrvm/encoder.hpp"
#include "mrvm/geometry.hpp"
#include "mrvm/image.hpp"
#include "mrvm/model.hpp"
#include "mrvm/sampler.hpp"
#include "mrvm/scenegen.hpp"

/// Volume rendering, pixel losses and the two-stage ray pipeline.
namespace mrvm::render {

using geometry::Vec3;

/// T_1..T_N followed by the residual T_{N+1}.
std::vector<double> transmittance(std::span<const double> sigmas, std::span<const double> deltas);

struct Composite {
  Vec3 color = Vec3::Zero();
  std::vector<double> weights;
  double residual = 1.0;
};

Composite composite(std::span<const double> sigmas, std::span<const Vec3> colors, std::span<const double> deltas,
                    const Vec3& background);

/// Midpoint quadrature of the analytic scene field with `n` equal steps
/// over the part of the ray inside the scene bounds.
Vec3 quadrature_render(const scene::SceneSpec& scene, const geometry::Ray& ray, std::size_t n);

double nerf_loss(const Vec3& coarse, const Vec3& fine, const Vec3& target);
/// Sum over rays of nerf + lambda * latent, divided by the ray count.
double total_loss(std::span<const double> nerf, std::span<const double> latent, double lambda);

struct CompositeVars {
  diff::Var color;     // (R x 3)
  diff::Var weights;   // (R x N)
  diff::Var residual;  // (R x 1)
};

/// Differentiable compositing of R rays with N samples each. sigma is
/// (R*N x 1), color (R*N x 3), deltas (R x N).
CompositeVars composite_ad(diff::Var sigma, diff::Var color, const diff::Tensor& deltas, const Vec3& background);

/// Rays clipped to the scene bounds; rays that miss carry hit = 0 and
/// render as background.
struct RaySet {
  std::vector<geometry::Ray> rays;
  std::vector<std::uint8_t> hit;
  std::size_t size() const { return rays.size(); }
};

RaySet make_rays(const geometry::Camera& camera, std::span<const scene::Pixel> pixels, const geometry::Aabb& bbox);

struct PassOptions {
  bool jitter = false;
  /// Latent objective evaluated on the fine branch; off skips it.
  MrvmMode objective = MrvmMode::off;
  /// Fraction of fine points masked per ray; 0 disables masking.
  double mask_ratio = 0.0;
  double lambda = 0.0;
  /// Per-ray streams are make_rng(seed, stream, global ray index, tag).
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  bool compute_grad = false;
  int threads = 1;
};

/// Fixed ray count per tape; results never depend on the worker count.
inline constexpr std::size_t kChunkRays = 8;
/// Larger fixed chunks for passes without gradients.
inline constexpr std::size_t kRenderChunkRays = 32;

struct PassResult {
  std::vector<Vec3> color_coarse;
  std::vector<Vec3> color_fine;
  /// Sum of compositing weights plus residual transmittance, per ray.
  std::vector<double> mass_coarse;
  std::vector<double> mass_fine;
  std::vector<double> nerf_coarse;  // per ray, when targets are given
  std::vector<double> nerf_fine;
  std::vector<double> latent;       // per ray, 0 when the objective is off
  std::size_t degenerate_pairs = 0;
  double loss = 0.0;
  /// Aligned with model.params order; empty unless compute_grad.
  std::vector<std::vector<double>> grads;
};

PassResult render_rays(const Model& model, const encoder::ReferenceViews& refs, const RaySet& rays,
                       std::span<const Vec3> targets, const PassOptions& options);

/// Pieces of the pipeline exposed for gradient checking on one tape.
struct GraphOutput {
  diff::Var color_coarse;
  diff::Var color_fine;
  diff::Var nerf;    // (R x 1)
  diff::Var latent;  // (R x 1) or invalid
  std::vector<sampler::DepthSamples> fine_samples;
  /// The constant the latent loss is measured against: projected target
  /// latents, or the original tokens for the reconstruction variant.
  diff::Tensor latent_target;
  std::vector<double> mass_coarse;
  std::vector<double> mass_fine;
  std::size_t degenerate_pairs = 0;
};

/// Values that replace the data-dependent, non-differentiated parts of the
/// graph, so that it becomes a smooth function of the parameters.
struct GraphOverrides {
  const std::vector<sampler::DepthSamples>* fine_samples = nullptr;
  const diff::Tensor* latent_target = nullptr;
};

/// Builds the two-stage graph for rays that all hit the scene bounds.
GraphOutput build_graph(const diff::Bindings& params, const diff::ParamStore& store, const ModelConfig& config,
                        diff::Var featmaps, const encoder::ReferenceViews& refs, std::span<const geometry::Ray> rays,
                        std::span<const std::size_t> ray_ids, std::span<const Vec3> targets,
                        const PassOptions& options, const GraphOverrides& overrides = {});

/// Renders every pixel of `camera` with the fine branch.
Image render_image(const Model& model, const encoder::ReferenceViews& refs, const geometry::Camera& camera,
                   const geometry::Aabb& bbox, int threads);

/// The S training cameras closest to `target` (by center distance, ties by
/// index), skipping `exclude`.
std::vector<int> nearest_views(const std::vector<geometry::Camera>& cameras, std::span<const int> candidates,
                               const geometry::Camera& target, int count, int exclude = -1);

encoder::ReferenceViews make_references(const scene::Dataset& dataset, std::span<const int> views);

}  // namespace mrvm::render
