// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrvm/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "mrvm/encoder.hpp"
#include "mrvm/geometry.hpp"
#include "mrvm/model.hpp"
#include "mrvm/renderer.hpp"
#include "mrvm/rng.hpp"
#include "mrvm/scenegen.hpp"

namespace mrvm::gradcheck {

using diff::Bindings;
using diff::ParamStore;
using diff::Tape;
using diff::Tensor;
using diff::Var;

namespace {

void fill(diff::Param& p, Rng& rng, double lo, double hi) {
  for (double& v : p.data) v = uniform(rng, lo, hi);
}

/// Contracts an op output against fixed random weights to get a scalar.
Var contract(Var out, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0xC0);
  Tensor w(out.rows(), out.cols());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = uniform(rng, -1.0, 1.0);
  return diff::sum(diff::mul(out, out.tape().constant(std::move(w))));
}

Entry run(const std::string& name, ParamStore store, std::uint64_t seed,
          const std::function<Var(const Bindings&)>& body) {
  const diff::LossFn fn = [&](Tape&, const Bindings& b) { return contract(body(b), seed); };
  return {name, diff::finite_diff_check(fn, store, kStep)};
}

}  // namespace

std::vector<Entry> check_ops(std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x0E);
  auto store_of = [&](std::initializer_list<std::tuple<const char*, std::size_t, std::size_t, double, double>> specs) {
    ParamStore s(seed);
    for (const auto& [name, r, c, lo, hi] : specs) fill(s.add(name, r, c), rng, lo, hi);
    return s;
  };
  std::vector<Entry> out;
  const auto ab = [&] { return store_of({{"a", 3, 4, -1.0, 1.0}, {"b", 3, 4, -1.0, 1.0}}); };
  out.push_back(run("add", ab(), seed, [](const Bindings& b) { return diff::add(b["a"], b["b"]); }));
  out.push_back(run("sub", ab(), seed, [](const Bindings& b) { return diff::sub(b["a"], b["b"]); }));
  out.push_back(run("mul", ab(), seed, [](const Bindings& b) { return diff::mul(b["a"], b["b"]); }));
  out.push_back(run("matvec", store_of({{"a", 3, 4, -1.0, 1.0}, {"x", 4, 1, -1.0, 1.0}}), seed,
                    [](const Bindings& b) { return diff::matvec(b["a"], b["x"]); }));
  out.push_back(run("matmul", store_of({{"a", 3, 4, -1.0, 1.0}, {"b", 4, 2, -1.0, 1.0}}), seed,
                    [](const Bindings& b) { return diff::matmul(b["a"], b["b"]); }));
  {
    ParamStore s(seed);
    auto& p = s.add("a", 3, 4);
    for (std::size_t i = 0; i < p.data.size(); ++i) p.data[i] = (i % 2 ? 1.0 : -1.0) * uniform(rng, 0.1, 1.0);
    out.push_back(run("relu", std::move(s), seed, [](const Bindings& b) { return diff::relu(b["a"]); }));
  }
  const auto a = [&] { return store_of({{"a", 3, 4, -2.0, 2.0}}); };
  out.push_back(run("softplus", a(), seed, [](const Bindings& b) { return diff::softplus(b["a"]); }));
  out.push_back(run("sigmoid", a(), seed, [](const Bindings& b) { return diff::sigmoid(b["a"]); }));
  out.push_back(run("exp", a(), seed, [](const Bindings& b) { return diff::exp(b["a"]); }));
  out.push_back(run("log", store_of({{"a", 3, 4, 0.5, 2.0}}), seed,
                    [](const Bindings& b) { return diff::log(b["a"]); }));
  out.push_back(run("sum", a(), seed, [](const Bindings& b) { return diff::sum(b["a"]); }));
  out.push_back(run("mean", a(), seed, [](const Bindings& b) { return diff::mean(b["a"]); }));
  out.push_back(run("l2norm", a(), seed, [](const Bindings& b) { return diff::l2norm(b["a"]); }));
  out.push_back(run("normalize", a(), seed, [](const Bindings& b) { return diff::normalize(b["a"]); }));
  out.push_back(run("concat", store_of({{"a", 3, 2, -1.0, 1.0}, {"b", 3, 4, -1.0, 1.0}}), seed,
                    [](const Bindings& b) { return diff::concat(b["a"], b["b"]); }));
  out.push_back(run("slice", a(), seed, [](const Bindings& b) { return diff::slice(b["a"], 1, 3); }));
  out.push_back(run("broadcast_scalar", store_of({{"a", 1, 1, -1.0, 1.0}}), seed,
                    [](const Bindings& b) { return diff::broadcast(b["a"], 3, 4); }));
  out.push_back(run("broadcast_row", store_of({{"a", 1, 4, -1.0, 1.0}}), seed,
                    [](const Bindings& b) { return diff::broadcast(b["a"], 3, 4); }));
  out.push_back(run("broadcast_col", store_of({{"a", 3, 1, -1.0, 1.0}}), seed,
                    [](const Bindings& b) { return diff::broadcast(b["a"], 3, 4); }));
  out.push_back(run("dot", ab(), seed, [](const Bindings& b) { return diff::dot(b["a"], b["b"]); }));
  out.push_back(run("scale", a(), seed, [](const Bindings& b) { return diff::scale(b["a"], -1.7); }));
  out.push_back(run("reshape", a(), seed, [](const Bindings& b) { return diff::reshape(b["a"], 2, 6); }));
  out.push_back(run("row_sum", a(), seed, [](const Bindings& b) { return diff::row_sum(b["a"]); }));
  out.push_back(run("group_sum", store_of({{"a", 6, 2, -1.0, 1.0}}), seed,
                    [](const Bindings& b) { return diff::group_sum(b["a"], 3); }));
  out.push_back(run("cumsum", a(), seed, [](const Bindings& b) { return diff::cumsum_exclusive(b["a"]); }));
  out.push_back(run("replace_rows", store_of({{"a", 4, 3, -1.0, 1.0}, {"m", 1, 3, -1.0, 1.0}}), seed,
                    [](const Bindings& b) { return diff::replace_rows(b["a"], b["m"], {0, 1, 0, 1}); }));
  out.push_back(run("gather_rows", store_of({{"a", 4, 3, -1.0, 1.0}}), seed,
                    [](const Bindings& b) { return diff::gather_rows(b["a"], {3, 0, 3, 2}); }));
  out.push_back(run("im2col3x3", store_of({{"a", 2 * 3 * 4, 2, -1.0, 1.0}}), seed,
                    [](const Bindings& b) { return diff::im2col3x3(b["a"], 3, 4); }));
  {
    std::vector<diff::BilinearTap> taps;
    for (const auto& [px, py] : {std::pair{0.7, 1.2}, std::pair{2.5, 2.5}, std::pair{-1.0, 4.0}})
      taps.push_back(geometry::bilinear_tap(3, 4, px, py, 0));
    out.push_back(run("bilinear", store_of({{"a", 12, 2, -1.0, 1.0}}), seed,
                      [taps](const Bindings& b) { return diff::bilinear(b["a"], taps); }));
  }
  return out;
}

Entry check_pipeline(std::uint64_t seed, MrvmMode objective) {
  ModelConfig cfg;
  cfg.feature_dim = 3;
  cfg.token_dim = 4;
  cfg.trunk_width = 5;
  cfg.latent_dim = 4;
  cfg.head_width = 5;
  cfg.proj_dim = 3;
  cfg.proj_hidden = 4;
  cfg.recon_hidden = 4;
  cfg.n_coarse = 4;
  cfg.n_fine_extra = 2;
  cfg.activation = Activation::softplus;
  const Model model = init_model(cfg, objective, seed);

  scene::GenConfig gen;
  gen.width = gen.height = 6;
  gen.min_primitives = gen.max_primitives = 2;
  Rng rng = make_rng(seed, 0x91);
  const scene::SceneSpec scene = scene::sample_scene(rng, gen);
  const auto cams = scene::orbit_cameras(gen, 3);
  std::vector<Image> images;
  for (int v = 0; v < 2; ++v) images.push_back(scene::render_oracle_image(scene, cams[static_cast<std::size_t>(v)]));
  encoder::ReferenceViews refs;
  for (int v = 0; v < 2; ++v) {
    refs.cameras.push_back(cams[static_cast<std::size_t>(v)]);
    refs.images.push_back(&images[static_cast<std::size_t>(v)]);
    refs.view_ids.push_back(v);
  }
  std::optional<geometry::Ray> ray;
  for (int k = 0; k < gen.width * gen.height && !ray; ++k) {
    const int spiral[] = {2, 3, 1, 4, 0, 5};
    ray = geometry::clip_to_box(
        geometry::ray_for_pixel(cams[2], spiral[k % gen.width], spiral[k / gen.width]), scene.bbox);
  }
  if (!ray) throw InvalidArgument("gradcheck: no probe ray reaches the scene");
  const std::vector<geometry::Ray> rays = {*ray};
  const std::vector<std::size_t> ids = {0};
  const std::vector<geometry::Vec3> targets = {scene::oracle_render(scene, *ray)};

  render::PassOptions opt;
  opt.jitter = true;
  opt.objective = objective;
  opt.mask_ratio = objective == MrvmMode::off ? 0.0 : 0.5;
  opt.lambda = 1.0;
  opt.seed = seed;

  ParamStore checked(seed);
  for (std::size_t i = 0; i < model.params.size(); ++i)
    if (!is_ema_target(model.params.name(i))) checked.add(model.params.name(i), model.params.param(i));

  // Depths and the latent target are fixed at their base values: neither is
  // differentiated, so finite differences must not see them move either.
  std::vector<sampler::DepthSamples> fine;
  diff::Tensor latent_target;
  {
    Tape tape;
    const Bindings b(tape, checked, false);
    const Var feat = encoder::encode_views(b, refs.images, cfg);
    auto base = render::build_graph(b, model.params, cfg, feat, refs, rays, ids, targets, opt);
    fine = std::move(base.fine_samples);
    latent_target = std::move(base.latent_target);
  }
  render::GraphOverrides frozen;
  frozen.fine_samples = &fine;
  if (objective != MrvmMode::off) frozen.latent_target = &latent_target;
  const diff::LossFn fn = [&](Tape&, const Bindings& b) {
    const Var feat = encoder::encode_views(b, refs.images, cfg);
    const auto g = render::build_graph(b, model.params, cfg, feat, refs, rays, ids, targets, opt, frozen);
    Var loss = diff::sum(g.nerf);
    if (g.latent.valid()) loss = diff::add(loss, diff::sum(g.latent));
    return loss;
  };
  return {"pipeline[" + to_string(objective) + "]", diff::finite_diff_check(fn, checked, kPipelineStep, diff::FdScheme::richardson)};
}

std::vector<Entry> check_all(std::uint64_t seed) {
  auto out = check_ops(seed);
  for (MrvmMode m : {MrvmMode::off, MrvmMode::standard, MrvmMode::featmask1, MrvmMode::featmask2})
    out.push_back(check_pipeline(seed, m));
  return out;
}

}  // namespace mrvm::gradcheck
