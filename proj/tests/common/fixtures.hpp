// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mrvm/config.hpp"
#include "mrvm/encoder.hpp"
#include "mrvm/image.hpp"
#include "mrvm/scenegen.hpp"

namespace mrvm::testing {

/// A rendered scene held in memory.
struct ToyScene {
  scene::SceneSpec spec;
  std::vector<geometry::Camera> cameras;
  std::vector<Image> images;

  encoder::ReferenceViews refs(std::vector<int> ids) const {
    encoder::ReferenceViews r;
    for (int i : ids) {
      r.cameras.push_back(cameras[static_cast<std::size_t>(i)]);
      r.images.push_back(&images[static_cast<std::size_t>(i)]);
      r.view_ids.push_back(i);
    }
    return r;
  }
};

inline ToyScene make_toy_scene(std::uint64_t seed, int size = 12, int views = 6) {
  scene::GenConfig gen;
  gen.width = gen.height = size;
  ToyScene t;
  Rng rng = make_rng(seed, 0x70F);
  t.spec = scene::sample_scene(rng, gen);
  t.cameras = scene::orbit_cameras(gen, views);
  for (const auto& c : t.cameras) {
    Image img = scene::render_oracle_image(t.spec, c);
    for (double& v : img.rgb) v = quantize8(v);
    t.images.push_back(std::move(img));
  }
  return t;
}

/// Narrow network with few samples so a full pass runs in milliseconds.
inline ModelConfig tiny_model() {
  ModelConfig c;
  c.feature_dim = 4;
  c.token_dim = 6;
  c.trunk_width = 8;
  c.latent_dim = 6;
  c.head_width = 8;
  c.proj_dim = 4;
  c.proj_hidden = 6;
  c.recon_hidden = 6;
  c.n_coarse = 8;
  c.n_fine_extra = 4;
  return c;
}

inline std::filesystem::path fresh_dir(const std::string& name) {
  const auto d = std::filesystem::temp_directory_path() / ("mrvm_test_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

/// Writes `count` small scenes below `dir` and loads them back.
inline std::vector<scene::Dataset> toy_corpus(const std::filesystem::path& dir, int count, std::uint64_t seed,
                                              int size = 12, int train_views = 8, int test_views = 2) {
  scene::GenConfig gen;
  gen.width = gen.height = size;
  gen.train_views = train_views;
  gen.test_views = test_views;
  std::vector<scene::Dataset> out;
  for (int i = 0; i < count; ++i) {
    Rng rng = make_rng(seed, 0xC0, static_cast<std::uint64_t>(i));
    const auto spec = scene::sample_scene(rng, gen);
    const auto cams = scene::orbit_cameras(gen, train_views + test_views);
    const auto sub = dir / ("scene_" + std::to_string(i));
    scene::emit_dataset(spec, cams, scene::make_splits(train_views + test_views, test_views), sub,
                        "scene_" + std::to_string(i));
    out.push_back(scene::load_dataset(sub));
  }
  return out;
}

}  // namespace mrvm::testing
