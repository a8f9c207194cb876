// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrvm/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "mrvm/field.hpp"
#include "mrvm/masking.hpp"
#include "mrvm/objective.hpp"
#include "mrvm/parallel.hpp"

namespace mrvm::render {

using diff::Tensor;
using diff::Var;

namespace {

// Tape tensors are large and short-lived; keeping them on the heap instead of
// fresh mappings avoids a page-fault storm on every chunk.
bool tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  return true;
}
[[maybe_unused]] const bool kAllocatorTuned = tune_allocator();

enum StreamTag : std::uint64_t { kJitterTag = 1, kImportanceTag = 2, kMaskTag = 3 };

void check_depths(std::span<const double> sigmas, std::span<const double> deltas) {
  if (sigmas.size() != deltas.size()) throw InvalidArgument("transmittance: sigma and delta lengths differ");
  for (std::size_t i = 0; i < sigmas.size(); ++i)
    if (!(sigmas[i] >= 0.0) || !(deltas[i] >= 0.0))
      throw InvalidArgument("transmittance: negative or NaN input at sample " + std::to_string(i));
}

Tensor rows_of(const Vec3& v, std::size_t rows) {
  Tensor t(rows, 3);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < 3; ++c) t(r, c) = v[static_cast<Eigen::Index>(c)];
  return t;
}

Vec3 row_vec3(const Tensor& t, std::size_t r) { return {t(r, 0), t(r, 1), t(r, 2)}; }

double sq_dist(const Vec3& a, const Vec3& b) { return (a - b).squaredNorm(); }

struct PointSet {
  std::vector<geometry::Vec3> points;
  std::vector<double> depth01;
  std::vector<double> dirs;
  Tensor deltas;
};

PointSet point_set(std::span<const geometry::Ray> rays, const std::vector<sampler::DepthSamples>& samples,
                   std::size_t n) {
  PointSet ps;
  ps.deltas = Tensor(rays.size(), n);
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const auto& s = samples[r];
    if (s.size() != n) throw InvalidArgument("build_graph: sample count differs from the configured count");
    const auto d = s.deltas();
    const double span = s.t_far - s.t_near;
    for (std::size_t k = 0; k < n; ++k) {
      ps.points.push_back(rays[r].at(s.t[k]));
      ps.depth01.push_back((s.t[k] - s.t_near) / span);
      for (int a = 0; a < 3; ++a) ps.dirs.push_back(rays[r].direction[a]);
      ps.deltas(r, k) = d[k];
    }
  }
  return ps;
}

struct BranchVars {
  encoder::TokenBatch tokens;
  Var input;    // tokens after masking and depth encoding
  Var latents;  // per view
  Var pooled;
  CompositeVars composite;
};

Var with_depth(Var tokens, const PointSet& ps, std::size_t n_views, const ModelConfig& config) {
  return config.depth_encoding ? encoder::append_depth_encoding(tokens, ps.depth01, n_views) : tokens;
}

BranchVars run_branch(const diff::Bindings& params, const ModelConfig& config, const std::string& branch, Var featmaps,
                      const encoder::ReferenceViews& refs, const PointSet& ps,
                      const std::vector<std::uint8_t>* mask_flags) {
  diff::Tape& tape = featmaps.tape();
  BranchVars b;
  b.tokens = encoder::gather_tokens(params, featmaps, refs, ps.points);
  Var h = b.tokens.h;
  if (mask_flags != nullptr) h = diff::replace_rows(h, params["mask_token"], *mask_flags);
  b.input = with_depth(h, ps, refs.size(), config);
  b.latents = field::trunk_forward(params, branch, b.input, config);
  b.pooled = field::pool_views(b.latents, refs.size());
  Var dirs;
  if (config.view_dirs) dirs = tape.constant(field::direction_encoding(ps.dirs));
  const field::Decoded dec = field::decode(params, branch, b.pooled, config, dirs);
  b.composite = composite_ad(dec.sigma, dec.color, ps.deltas, config.background);
  return b;
}

std::vector<double> mass_of(const CompositeVars& c) {
  const Tensor& w = c.weights.value();
  std::vector<double> out(w.rows());
  for (std::size_t r = 0; r < w.rows(); ++r) {
    double s = c.residual.value()(r, 0);
    for (double v : w.row_span(r)) s += v;
    out[r] = s;
  }
  return out;
}

}  // namespace

std::vector<double> transmittance(std::span<const double> sigmas, std::span<const double> deltas) {
  check_depths(sigmas, deltas);
  std::vector<double> t(sigmas.size() + 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    t[i] = std::exp(-acc);
    acc += sigmas[i] * deltas[i];
  }
  t.back() = std::exp(-acc);
  return t;
}

Composite composite(std::span<const double> sigmas, std::span<const Vec3> colors, std::span<const double> deltas,
                    const Vec3& background) {
  if (colors.size() != sigmas.size()) throw InvalidArgument("composite: color count differs from sigma count");
  const auto t = transmittance(sigmas, deltas);
  Composite out;
  out.weights.resize(sigmas.size());
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    out.weights[i] = t[i] * -std::expm1(-sigmas[i] * deltas[i]);
    out.color += out.weights[i] * colors[i];
  }
  out.residual = t.back();
  out.color += out.residual * background;
  return out;
}

Vec3 quadrature_render(const scene::SceneSpec& scene, const geometry::Ray& ray, std::size_t n) {
  if (n == 0) throw InvalidArgument("quadrature_render: need at least one step");
  if (scene.primitives.empty()) return scene.background;
  const auto clipped = geometry::clip_to_box(ray, scene.bbox);
  if (!clipped) return scene.background;
  const double width = (clipped->t_far - clipped->t_near) / static_cast<double>(n);
  Vec3 color = Vec3::Zero();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = clipped->t_near + (static_cast<double>(i) + 0.5) * width;
    const auto f = scene::field_query(scene, ray.at(t));
    if (f.sigma <= 0.0) continue;
    color += std::exp(-acc) * -std::expm1(-f.sigma * width) * f.color;
    acc += f.sigma * width;
  }
  return color + std::exp(-acc) * scene.background;
}

double nerf_loss(const Vec3& coarse, const Vec3& fine, const Vec3& target) {
  return sq_dist(target, coarse) + sq_dist(target, fine);
}

double total_loss(std::span<const double> nerf, std::span<const double> latent, double lambda) {
  if (nerf.empty() || nerf.size() != latent.size())
    throw InvalidArgument("total_loss: need equal, non-empty per-ray term lists");
  double s = 0.0;
  for (std::size_t r = 0; r < nerf.size(); ++r) s += nerf[r] + lambda * latent[r];
  return s / static_cast<double>(nerf.size());
}

CompositeVars composite_ad(Var sigma, Var color, const Tensor& deltas, const Vec3& background) {
  const std::size_t rays = deltas.rows(), n = deltas.cols();
  if (sigma.rows() != rays * n || sigma.cols() != 1 || color.rows() != rays * n || color.cols() != 3)
    throw InvalidArgument("composite_ad: expected sigma (" + std::to_string(rays * n) + "x1) and color (" +
                          std::to_string(rays * n) + "x3), got " + sigma.value().shape_string() + " and " +
                          color.value().shape_string());
  diff::Tape& tape = sigma.tape();
  const Var sd = diff::mul(diff::reshape(sigma, rays, n), tape.constant(deltas));
  const Var trans = diff::exp(diff::scale(diff::cumsum_exclusive(sd), -1.0));
  const Var alpha = diff::sub(tape.constant(Tensor(rays, n, 1.0)), diff::exp(diff::scale(sd, -1.0)));
  CompositeVars out;
  out.weights = diff::mul(trans, alpha);
  out.residual = diff::exp(diff::scale(diff::row_sum(sd), -1.0));
  const Var w = diff::broadcast(diff::reshape(out.weights, rays * n, 1), rays * n, 3);
  const Var emitted = diff::group_sum(diff::mul(w, color), n);
  const Var bg = diff::mul(diff::broadcast(out.residual, rays, 3), tape.constant(rows_of(background, rays)));
  out.color = diff::add(emitted, bg);
  return out;
}

RaySet make_rays(const geometry::Camera& camera, std::span<const scene::Pixel> pixels, const geometry::Aabb& bbox) {
  RaySet set;
  set.rays.reserve(pixels.size());
  set.hit.reserve(pixels.size());
  for (const auto& p : pixels) {
    const geometry::Ray ray = geometry::ray_for_pixel(camera, p.x, p.y);
    const auto clipped = geometry::clip_to_box(ray, bbox);
    set.rays.push_back(clipped ? *clipped : ray);
    set.hit.push_back(clipped ? 1 : 0);
  }
  return set;
}

GraphOutput build_graph(const diff::Bindings& params, const diff::ParamStore& store, const ModelConfig& config,
                        Var featmaps, const encoder::ReferenceViews& refs, std::span<const geometry::Ray> rays,
                        std::span<const std::size_t> ray_ids, std::span<const Vec3> targets,
                        const PassOptions& options, const GraphOverrides& overrides) {
  const std::size_t n_rays = rays.size();
  if (n_rays == 0) throw InvalidArgument("build_graph: no rays");
  if (ray_ids.size() != n_rays) throw InvalidArgument("build_graph: one id per ray required");
  if (!targets.empty() && targets.size() != n_rays) throw InvalidArgument("build_graph: one target per ray required");
  if (refs.size() == 0) throw InvalidArgument("build_graph: no reference views");
  diff::Tape& tape = featmaps.tape();
  const std::size_t nc = static_cast<std::size_t>(config.n_coarse);
  const std::size_t nf = static_cast<std::size_t>(config.n_fine());
  const std::size_t n_views = refs.size();
  GraphOutput out;

  std::vector<sampler::DepthSamples> coarse(n_rays);
  for (std::size_t r = 0; r < n_rays; ++r) {
    Rng rng = make_rng(options.seed, options.stream, ray_ids[r], kJitterTag);
    coarse[r] = sampler::stratified(rays[r], nc, &rng, options.jitter);
  }
  const PointSet pc = point_set(rays, coarse, nc);
  const BranchVars cb = run_branch(params, config, field::kCoarse, featmaps, refs, pc, nullptr);
  out.color_coarse = cb.composite.color;
  out.mass_coarse = mass_of(cb.composite);

  if (overrides.fine_samples != nullptr) {
    if (overrides.fine_samples->size() != n_rays) throw InvalidArgument("build_graph: fine override size mismatch");
    out.fine_samples = *overrides.fine_samples;
  } else {
    const Tensor& w = cb.composite.weights.value();
    out.fine_samples.resize(n_rays);
    for (std::size_t r = 0; r < n_rays; ++r) {
      Rng rng = make_rng(options.seed, options.stream, ray_ids[r], kImportanceTag);
      const auto extra = config.n_fine_extra > 0
                             ? sampler::importance(coarse[r], w.row_span(r),
                                                   static_cast<std::size_t>(config.n_fine_extra), rng)
                             : std::vector<double>{};
      out.fine_samples[r] = sampler::merge(coarse[r], extra);
    }
  }
  const PointSet pf = point_set(rays, out.fine_samples, nf);

  std::vector<std::uint8_t> flags;
  if (options.mask_ratio > 0.0) {
    flags.reserve(n_rays * nf * n_views);
    for (std::size_t r = 0; r < n_rays; ++r) {
      Rng rng = make_rng(options.seed, options.stream, ray_ids[r], kMaskTag);
      const auto plan = masking::sample_mask_plan(nf, n_views, options.mask_ratio, rng);
      const auto f = plan.row_flags();
      flags.insert(flags.end(), f.begin(), f.end());
    }
  }
  const bool any_mask = std::any_of(flags.begin(), flags.end(), [](std::uint8_t f) { return f != 0; });
  const BranchVars fb = run_branch(params, config, field::kFine, featmaps, refs, pf, any_mask ? &flags : nullptr);
  out.color_fine = fb.composite.color;
  out.mass_fine = mass_of(fb.composite);

  if (!targets.empty()) {
    Tensor t(n_rays, 3);
    for (std::size_t r = 0; r < n_rays; ++r)
      for (std::size_t c = 0; c < 3; ++c) t(r, c) = targets[r][static_cast<Eigen::Index>(c)];
    const Var gt = tape.constant(std::move(t));
    const Var dc = diff::sub(out.color_coarse, gt);
    const Var df = diff::sub(out.color_fine, gt);
    out.nerf = diff::add(diff::row_sum(diff::mul(dc, dc)), diff::row_sum(diff::mul(df, df)));
  }

  if (options.objective == MrvmMode::standard || options.objective == MrvmMode::featmask2) {
    std::vector<std::size_t> shared;
    shared.reserve(n_rays * nc);
    for (std::size_t r = 0; r < n_rays; ++r) {
      const auto idx = out.fine_samples[r].coarse_indices();
      if (idx.size() != nc) throw InvalidArgument("build_graph: fine samples lost coarse entries");
      for (std::size_t k : idx) shared.push_back(r * nf + k);
    }
    const Var online = objective::online_project_predict(params, diff::gather_rows(fb.pooled, shared), config);
    if (overrides.latent_target != nullptr) {
      out.latent_target = *overrides.latent_target;
    } else {
      Tensor target_latents;
      if (options.objective == MrvmMode::standard) {
        target_latents = cb.pooled.value();
      } else {
        diff::Bindings frozen;
        frozen.bind(tape, store, objective::kFineTarget, false);
        Var unmasked = with_depth(tape.constant(fb.tokens.h.value()), pf, n_views, config);
        const Var lat = field::trunk_forward(frozen, "fine_target", unmasked, config);
        target_latents = diff::gather_rows(field::pool_views(lat, n_views), shared).value();
      }
      out.latent_target = objective::target_project(tape, store, target_latents, config).value();
    }
    const auto terms = objective::alignment_loss(online, tape.constant(out.latent_target), nc);
    out.latent = terms.per_ray;
    out.degenerate_pairs = terms.degenerate;
  } else if (options.objective == MrvmMode::featmask1) {
    std::vector<std::size_t> ray_of_row(n_rays * nf * n_views);
    for (std::size_t i = 0; i < ray_of_row.size(); ++i) ray_of_row[i] = i / (nf * n_views);
    if (flags.empty()) flags.assign(ray_of_row.size(), 0);
    out.latent_target = overrides.latent_target != nullptr ? *overrides.latent_target : fb.tokens.h.value();
    out.latent = objective::reconstruction_loss(params, fb.latents, out.latent_target, flags, ray_of_row, n_rays,
                                                config);
  }
  return out;
}

PassResult render_rays(const Model& model, const encoder::ReferenceViews& refs, const RaySet& rays,
                       std::span<const Vec3> targets, const PassOptions& options) {
  const std::size_t n = rays.size();
  if (!targets.empty() && targets.size() != n) throw InvalidArgument("render_rays: one target per ray required");
  const bool has_targets = !targets.empty();
  const ModelConfig& config = model.config;
  const diff::ParamStore& store = model.params;
  PassResult result;
  result.color_coarse.assign(n, config.background);
  result.color_fine.assign(n, config.background);
  result.mass_coarse.assign(n, 1.0);
  result.mass_fine.assign(n, 1.0);
  result.latent.assign(n, 0.0);
  if (has_targets) {
    result.nerf_coarse.resize(n);
    result.nerf_fine.resize(n);
  }
  if (n == 0) return result;

  diff::Tape enc_tape;
  diff::Bindings enc_params;
  enc_params.bind(enc_tape, store, "enc.", options.compute_grad);
  const Var featmaps = encoder::encode_views(enc_params, refs.images, config);

  struct ChunkOut {
    std::vector<std::vector<double>> grads;
    Tensor feat_grad;
    std::size_t degenerate = 0;
  };
  const std::size_t chunk = options.compute_grad ? kChunkRays : kRenderChunkRays;
  const std::size_t n_chunks = (n + chunk - 1) / chunk;
  std::vector<ChunkOut> chunks(n_chunks);
  const double inv_n = 1.0 / static_cast<double>(n);

  parallel_for(n_chunks, options.threads, [&](std::size_t c) {
    const std::size_t begin = c * chunk, end = std::min(n, begin + chunk);
    std::vector<geometry::Ray> hit_rays;
    std::vector<std::size_t> ids;
    std::vector<Vec3> hit_targets;
    for (std::size_t i = begin; i < end; ++i) {
      if (!rays.hit[i]) continue;
      hit_rays.push_back(rays.rays[i]);
      ids.push_back(i);
      if (has_targets) hit_targets.push_back(targets[i]);
    }
    if (hit_rays.empty()) return;
    diff::Tape tape;
    const diff::Bindings params(tape, store, options.compute_grad);
    const Var feat = tape.leaf(featmaps.value(), options.compute_grad);
    const GraphOutput g =
        build_graph(params, store, config, feat, refs, hit_rays, ids, hit_targets, options);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const std::size_t i = ids[k];
      result.color_coarse[i] = row_vec3(g.color_coarse.value(), k);
      result.color_fine[i] = row_vec3(g.color_fine.value(), k);
      result.mass_coarse[i] = g.mass_coarse[k];
      result.mass_fine[i] = g.mass_fine[k];
      if (g.latent.valid()) result.latent[i] = g.latent.value()(k, 0);
    }
    chunks[c].degenerate = g.degenerate_pairs;
    if (!options.compute_grad || !has_targets) return;
    Var loss = diff::sum(g.nerf);
    if (g.latent.valid() && options.lambda != 0.0)
      loss = diff::add(loss, diff::scale(diff::sum(g.latent), options.lambda));
    tape.backward(diff::scale(loss, inv_n));
    chunks[c].grads.resize(store.size());
    for (std::size_t p = 0; p < store.size(); ++p) {
      const std::string& name = store.name(p);
      if (is_ema_target(name)) continue;
      chunks[c].grads[p] = tape.grad(params[name]).values();
    }
    chunks[c].feat_grad = tape.grad(feat);
  });

  for (std::size_t i = 0; i < n; ++i) {
    if (!has_targets) break;
    result.nerf_coarse[i] = sq_dist(targets[i], result.color_coarse[i]);
    result.nerf_fine[i] = sq_dist(targets[i], result.color_fine[i]);
    result.loss += (result.nerf_coarse[i] + result.nerf_fine[i] + options.lambda * result.latent[i]) * inv_n;
  }
  for (const auto& c : chunks) result.degenerate_pairs += c.degenerate;
  if (!options.compute_grad || !has_targets) return result;

  result.grads.resize(store.size());
  for (std::size_t p = 0; p < store.size(); ++p) result.grads[p].assign(store.param(p).data.size(), 0.0);
  Tensor feat_grad(featmaps.rows(), featmaps.cols());
  for (const auto& c : chunks) {
    if (c.grads.empty()) continue;
    for (std::size_t p = 0; p < store.size(); ++p)
      for (std::size_t k = 0; k < c.grads[p].size(); ++k) result.grads[p][k] += c.grads[p][k];
    for (std::size_t k = 0; k < feat_grad.size(); ++k) feat_grad[k] += c.feat_grad[k];
  }
  const Var seeded = diff::sum(diff::mul(featmaps, enc_tape.constant(std::move(feat_grad))));
  enc_tape.backward(seeded);
  for (std::size_t p = 0; p < store.size(); ++p) {
    const std::string& name = store.name(p);
    if (!enc_params.contains(name)) continue;
    const auto& g = enc_tape.grad(enc_params[name]).values();
    for (std::size_t k = 0; k < g.size(); ++k) result.grads[p][k] += g[k];
  }
  return result;
}

Image render_image(const Model& model, const encoder::ReferenceViews& refs, const geometry::Camera& camera,
                   const geometry::Aabb& bbox, int threads) {
  std::vector<scene::Pixel> pixels;
  pixels.reserve(static_cast<std::size_t>(camera.width) * static_cast<std::size_t>(camera.height));
  for (int y = 0; y < camera.height; ++y)
    for (int x = 0; x < camera.width; ++x) pixels.push_back({x, y});
  PassOptions options;
  options.threads = threads;
  const PassResult r = render_rays(model, refs, make_rays(camera, pixels, bbox), {}, options);
  Image img;
  img.width = camera.width;
  img.height = camera.height;
  img.rgb.resize(pixels.size() * 3);
  for (std::size_t i = 0; i < pixels.size(); ++i)
    for (int c = 0; c < 3; ++c) img.rgb[i * 3 + static_cast<std::size_t>(c)] = std::clamp(r.color_fine[i][c], 0.0, 1.0);
  return img;
}

std::vector<int> nearest_views(const std::vector<geometry::Camera>& cameras, std::span<const int> candidates,
                               const geometry::Camera& target, int count, int exclude) {
  std::vector<std::pair<double, int>> order;
  for (int v : candidates) {
    if (v == exclude) continue;
    if (v < 0 || static_cast<std::size_t>(v) >= cameras.size())
      throw InvalidArgument("nearest_views: view index " + std::to_string(v) + " out of range");
    order.emplace_back((cameras[static_cast<std::size_t>(v)].center() - target.center()).norm(), v);
  }
  if (count <= 0 || static_cast<std::size_t>(count) > order.size())
    throw InvalidArgument("nearest_views: need " + std::to_string(count) + " views, have " +
                          std::to_string(order.size()));
  std::sort(order.begin(), order.end());
  std::vector<int> out;
  for (int i = 0; i < count; ++i) out.push_back(order[static_cast<std::size_t>(i)].second);
  return out;
}

encoder::ReferenceViews make_references(const scene::Dataset& dataset, std::span<const int> views) {
  encoder::ReferenceViews refs;
  for (int v : views) {
    if (v < 0 || static_cast<std::size_t>(v) >= dataset.images.size())
      throw InvalidArgument("make_references: view index " + std::to_string(v) + " out of range");
    refs.cameras.push_back(dataset.manifest.cameras[static_cast<std::size_t>(v)]);
    refs.images.push_back(&dataset.images[static_cast<std::size_t>(v)]);
    refs.view_ids.push_back(v);
  }
  return refs;
}

}  // namespace mrvm::render
