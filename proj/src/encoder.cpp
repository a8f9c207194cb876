// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrvm/encoder.hpp"

#include <cmath>
#include <numbers>

#include "mrvm/nn.hpp"

namespace mrvm::encoder {

void init_params(diff::ParamStore& store, const ModelConfig& config, Rng& rng) {
  const int f = config.feature_dim;
  nn::add_dense(store, "enc.conv1", 27, f, rng);
  nn::add_dense(store, "enc.conv2", 9 * f, f, rng);
  nn::add_dense(store, "enc.merge", f + 3, config.token_dim, rng);
  auto& mask = store.add("mask_token", 1, static_cast<std::size_t>(config.token_dim));
  for (auto& v : mask.data) v = uniform(rng, -0.1, 0.1);
}

Var encode_views(const Bindings& params, std::span<const Image* const> images, const ModelConfig& config) {
  if (images.empty()) throw InvalidArgument("encode_views: no images");
  const int h = images.front()->height, w = images.front()->width;
  if (h <= 0 || w <= 0) throw InvalidArgument("encode_views: empty image");
  std::vector<double> stacked;
  stacked.reserve(images.size() * images.front()->rgb.size());
  for (const Image* img : images) {
    if (img->height != h || img->width != w) throw InvalidArgument("encode_views: images differ in size");
    stacked.insert(stacked.end(), img->rgb.begin(), img->rgb.end());
  }
  diff::Tape& tape = params["enc.conv1.w"].tape();
  const auto hs = static_cast<std::size_t>(h), ws = static_cast<std::size_t>(w);
  Var x = tape.constant(diff::Tensor(images.size() * hs * ws, 3, std::move(stacked)));
  x = nn::activate(nn::dense(params, "enc.conv1", diff::im2col3x3(x, hs, ws)), config.activation);
  return nn::dense(params, "enc.conv2", diff::im2col3x3(x, hs, ws));
}

diff::Tensor encode_view(const diff::ParamStore& params, const Image& image, const ModelConfig& config) {
  diff::Tape tape;
  Bindings b;
  b.bind(tape, params, "enc.", false);
  const Image* one[] = {&image};
  return encode_views(b, one, config).value();
}

TokenBatch gather_tokens(const Bindings& params, Var featmaps, const ReferenceViews& refs,
                         std::span<const geometry::Vec3> points) {
  const std::size_t n_views = refs.size();
  if (n_views == 0) throw InvalidArgument("gather_tokens: no reference views");
  const int h = refs.height(), w = refs.width();
  const std::size_t plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  if (featmaps.rows() != n_views * plane)
    throw InvalidArgument("gather_tokens: feature maps " + featmaps.value().shape_string() + " do not match " +
                          std::to_string(n_views) + " views of " + std::to_string(h) + "x" + std::to_string(w));

  TokenBatch out;
  out.n_points = points.size();
  out.n_views = n_views;
  const std::size_t rows = points.size() * n_views;
  out.valid.assign(rows, 0);
  std::vector<diff::BilinearTap> taps(rows);
  diff::Tensor colors(rows, 3);
  for (std::size_t p = 0; p < points.size(); ++p) {
    for (std::size_t j = 0; j < n_views; ++j) {
      const std::size_t r = p * n_views + j;
      const auto proj = geometry::project_point(refs.cameras[j], points[p]);
      if (!proj.in_front) {
        taps[r] = diff::BilinearTap{{j * plane, j * plane, j * plane, j * plane}, {0.0, 0.0, 0.0, 0.0}};
        continue;
      }
      out.valid[r] = 1;
      taps[r] = geometry::bilinear_tap(h, w, proj.px, proj.py, j * plane);
      const auto& rgb = refs.images[j]->rgb;
      for (int k = 0; k < 4; ++k) {
        const std::size_t pix = taps[r].index[k] - j * plane;
        for (int c = 0; c < 3; ++c) colors(r, static_cast<std::size_t>(c)) += taps[r].weight[k] * rgb[pix * 3 + static_cast<std::size_t>(c)];
      }
    }
  }
  diff::Tape& tape = featmaps.tape();
  const Var features = diff::bilinear(featmaps, std::move(taps));
  const Var merged = nn::dense(params, "enc.merge", diff::concat(features, tape.constant(std::move(colors))));
  std::vector<std::uint8_t> invalid(rows);
  for (std::size_t r = 0; r < rows; ++r) invalid[r] = out.valid[r] ? 0 : 1;
  out.h = diff::replace_rows(merged, params["mask_token"], invalid);
  return out;
}

Token gather_token(const diff::ParamStore& params, const geometry::Vec3& point, const geometry::Camera& camera,
                   const Image& image, const diff::Tensor& featmap, int view_index, int point_index) {
  diff::Tape tape;
  Bindings b;
  b.bind(tape, params, "enc.", false);
  b.bind(tape, params, "mask_token", false);
  ReferenceViews refs;
  refs.cameras.push_back(camera);
  refs.images.push_back(&image);
  const geometry::Vec3 pts[] = {point};
  const TokenBatch batch = gather_tokens(b, tape.constant(featmap), refs, pts);
  Token t;
  t.h = batch.h.value().values();
  t.valid = batch.valid[0] != 0;
  t.view_index = view_index;
  t.point_index = point_index;
  return t;
}

Var append_depth_encoding(Var tokens, std::span<const double> depth01, std::size_t n_views) {
  if (depth01.size() * n_views != tokens.rows())
    throw InvalidArgument("append_depth_encoding: depth count does not match token rows");
  diff::Tensor enc(tokens.rows(), 8);
  for (std::size_t p = 0; p < depth01.size(); ++p) {
    for (int k = 0; k < 4; ++k) {
      const double arg = std::ldexp(std::numbers::pi * depth01[p], k);
      for (std::size_t j = 0; j < n_views; ++j) {
        enc(p * n_views + j, static_cast<std::size_t>(2 * k)) = std::sin(arg);
        enc(p * n_views + j, static_cast<std::size_t>(2 * k + 1)) = std::cos(arg);
      }
    }
  }
  return diff::concat(tokens, tokens.tape().constant(std::move(enc)));
}

}  // namespace mrvm::encoder
