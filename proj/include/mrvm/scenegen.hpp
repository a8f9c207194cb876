// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "mrvm/geometry.hpp"
#include "mrvm/image.hpp"
#include "mrvm/rng.hpp"

/// Procedural analytic scenes: piecewise-constant density primitives that
/// double as the exact ground truth for rendering and as the training data
/// source.
namespace mrvm::scene {

using geometry::Aabb;
using geometry::Camera;
using geometry::Ray;
using geometry::Vec3;

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
};

struct Box {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Ones();
};

struct Primitive {
  std::variant<Sphere, Box> shape;
  double density = 0.0;  // per world unit
  Vec3 albedo = Vec3::Zero();

  bool contains(const Vec3& p) const;
  /// Parameter interval where the ray is inside the primitive, clipped to
  /// the ray's [t_near, t_far].
  std::optional<std::pair<double, double>> intersect(const Ray& ray) const;
  Aabb bounds() const;
  void validate() const;
};

struct SceneSpec {
  std::vector<Primitive> primitives;
  Vec3 background = Vec3::Ones();
  Aabb bbox;

  /// Recomputes bbox as the tight bound of all primitives.
  void update_bbox();
  void validate() const;
};

struct GenConfig {
  int min_primitives = 3;
  int max_primitives = 6;
  double density_min = 2.0;
  double density_max = 20.0;
  double radius_min = 0.25;
  double radius_max = 0.55;
  double half_extent_min = 0.15;
  double half_extent_max = 0.45;
  double albedo_min = 0.05;
  double albedo_max = 0.95;
  bool sphere_only = false;
  Aabb placement{Vec3::Constant(-1.0), Vec3::Constant(1.0)};
  Vec3 background = Vec3::Ones();
  // Views emitted per scene.
  int width = 64;
  int height = 64;
  int train_views = 50;
  int test_views = 4;
  double camera_distance = 4.0;
  double fov_deg = 50.0;

  void validate() const;
};

std::string gen_config_to_json(const GenConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
GenConfig gen_config_from_json(const std::string& text);

std::string scene_to_json(const SceneSpec& scene);
SceneSpec scene_from_json(const std::string& text);

/// Deterministic given the rng state. Throws InvalidArgument when the
/// config cannot be satisfied (e.g. primitives larger than the placement
/// volume).
SceneSpec sample_scene(Rng& rng, const GenConfig& config);

struct FieldSample {
  double sigma = 0.0;
  Vec3 color = Vec3::Zero();
};

/// Density/albedo at a point; the later primitive in the list wins where
/// primitives overlap. Outside every primitive: sigma 0, color 0.
FieldSample field_query(const SceneSpec& scene, const Vec3& point);

struct OracleResult {
  Vec3 color = Vec3::Zero();
  /// Transmittance left after the ray's far bound.
  double residual = 1.0;
};

/// Exact emission-absorption integral over [ray.t_near, ray.t_far]:
/// density is constant between primitive boundaries, so each interval
/// integrates in closed form. Residual transmittance times the background
/// is added at the end.
OracleResult oracle_render_detailed(const SceneSpec& scene, const Ray& ray);
inline Vec3 oracle_render(const SceneSpec& scene, const Ray& ray) {
  return oracle_render_detailed(scene, ray).color;
}

/// Cameras on a Fibonacci spiral around the placement center, looking at it.
std::vector<Camera> orbit_cameras(const GenConfig& config, int count);

struct Splits {
  std::vector<int> train;
  std::vector<int> test;
};

/// Spreads `test_views` held-out indices evenly over [0, total).
Splits make_splits(int total, int test_views);

struct DatasetManifest {
  std::string scene_id;
  int width = 0;
  int height = 0;
  std::vector<Camera> cameras;
  std::vector<std::string> images;  // relative to the dataset directory
  Aabb bbox;
  Splits splits;
};

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text);

/// Renders every camera with the oracle and writes view_NNN.ppm,
/// manifest.json and scene.json into out_dir. Byte-identical for identical
/// inputs regardless of `threads`.
DatasetManifest emit_dataset(const SceneSpec& scene, const std::vector<Camera>& cameras,
                             const Splits& splits, const std::filesystem::path& out_dir,
                             const std::string& scene_id, int threads = 1);

/// Oracle rendering of a full image (pixels written by index).
Image render_oracle_image(const SceneSpec& scene, const Camera& camera, int threads = 1);

struct Dataset {
  std::filesystem::path dir;
  DatasetManifest manifest;
  std::vector<Image> images;  // 8-bit quantized, read back to [0, 1]
  std::optional<SceneSpec> scene;  // present when scene.json exists

  int num_views() const { return static_cast<int>(manifest.cameras.size()); }
};

Dataset load_dataset(const std::filesystem::path& dir);

struct Pixel {
  int x = 0;
  int y = 0;
  bool operator==(const Pixel&) const = default;
};

/// Pixels (with replacement) whose center ray hits `bbox`.
std::vector<Pixel> bbox_ray_filter(const Aabb& bbox, const Camera& camera, Rng& rng, int n_rays);
inline std::vector<Pixel> bbox_ray_filter(const SceneSpec& scene, const Camera& camera, Rng& rng,
                                          int n_rays) {
  return bbox_ray_filter(scene.bbox, camera, rng, n_rays);
}

/// Pixel ray clipped to the scene box; nullopt when it misses.
std::optional<Ray> pixel_ray_in_box(const Camera& camera, const Aabb& bbox, double px, double py);

}  // namespace mrvm::scene
