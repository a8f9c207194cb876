// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrvm/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "json_util.hpp"
#include "mrvm/parallel.hpp"

namespace mrvm::scene {

using detail::json;

// ---------------------------------------------------------------------------
// Primitives

bool Primitive::contains(const Vec3& p) const {
  if (const auto* s = std::get_if<Sphere>(&shape)) return (p - s->center).squaredNorm() <= s->radius * s->radius;
  const auto& b = std::get<Box>(shape);
  return (p.array() >= b.min.array()).all() && (p.array() <= b.max.array()).all();
}

std::optional<std::pair<double, double>> Primitive::intersect(const Ray& ray) const {
  if (const auto* s = std::get_if<Sphere>(&shape)) {
    const Vec3 oc = ray.origin - s->center;
    const double b = ray.direction.dot(oc);
    const double disc = b * b - (oc.squaredNorm() - s->radius * s->radius);
    if (disc <= 0.0) return std::nullopt;
    const double root = std::sqrt(disc);
    const double lo = std::max(ray.t_near, -b - root), hi = std::min(ray.t_far, -b + root);
    if (lo >= hi) return std::nullopt;
    return std::make_pair(lo, hi);
  }
  const auto& b = std::get<Box>(shape);
  return geometry::intersect_aabb(ray, Aabb{b.min, b.max});
}

Aabb Primitive::bounds() const {
  if (const auto* s = std::get_if<Sphere>(&shape))
    return {s->center.array() - s->radius, s->center.array() + s->radius};
  const auto& b = std::get<Box>(shape);
  return {b.min, b.max};
}

void Primitive::validate() const {
  if (const auto* s = std::get_if<Sphere>(&shape)) {
    if (!(s->radius > 0.0)) throw InvalidArgument("sphere radius must be positive");
  } else {
    const auto& b = std::get<Box>(shape);
    if (!(b.min.array() < b.max.array()).all()) throw InvalidArgument("box needs min < max componentwise");
  }
  if (!(density >= 0.0) || !std::isfinite(density))
    throw InvalidArgument("primitive density must be finite and non-negative");
  if (!(albedo.array() >= 0.0).all() || !(albedo.array() <= 1.0).all())
    throw InvalidArgument("albedo outside [0,1]");
}

void SceneSpec::update_bbox() {
  if (primitives.empty()) {
    bbox = Aabb{};
    return;
  }
  bbox = primitives.front().bounds();
  for (const auto& p : primitives) bbox.expand(p.bounds());
}

void SceneSpec::validate() const {
  for (const auto& p : primitives) {
    p.validate();
    const Aabb b = p.bounds();
    if (!bbox.contains(b.min) || !bbox.contains(b.max)) throw InvalidArgument("scene bbox does not contain every primitive");
  }
}

// ---------------------------------------------------------------------------
// Config and JSON

void GenConfig::validate() const {
  if (min_primitives < 1 || max_primitives < min_primitives)
    throw InvalidArgument("gen config: need 1 <= min_primitives <= max_primitives");
  if (!(density_min >= 0.0) || density_max < density_min) throw InvalidArgument("gen config: bad density range");
  if (!(albedo_min >= 0.0) || albedo_max > 1.0 || albedo_max < albedo_min)
    throw InvalidArgument("gen config: bad albedo range");
  const Vec3 extent = placement.max - placement.min;
  if (!(extent.array() > 0.0).all()) throw InvalidArgument("gen config: placement volume is empty");
  const double room = extent.minCoeff() / 2.0;
  if (!(radius_min > 0.0) || radius_max < radius_min || radius_min > room)
    throw InvalidArgument("gen config: sphere radius range does not fit the placement volume");
  if (!sphere_only &&
      (!(half_extent_min > 0.0) || half_extent_max < half_extent_min || half_extent_min > room))
    throw InvalidArgument("gen config: box extent range does not fit the placement volume");
  if (width < 1 || height < 1) throw InvalidArgument("gen config: image size must be positive");
  if (train_views < 1 || test_views < 0) throw InvalidArgument("gen config: need train_views >= 1, test_views >= 0");
  const Vec3 center = (placement.min + placement.max) / 2.0;
  const double bound_radius = std::max((placement.min - center).norm(), (placement.max - center).norm());
  if (!(camera_distance > bound_radius)) throw InvalidArgument("gen config: cameras would sit inside the placement volume");
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw InvalidArgument("gen config: fov_deg must be in (0, 180)");
}

std::string gen_config_to_json(const GenConfig& c) {
  json j = {{"min_primitives", c.min_primitives}, {"max_primitives", c.max_primitives},
            {"density_min", c.density_min},       {"density_max", c.density_max},
            {"radius_min", c.radius_min},         {"radius_max", c.radius_max},
            {"half_extent_min", c.half_extent_min}, {"half_extent_max", c.half_extent_max},
            {"albedo_min", c.albedo_min},         {"albedo_max", c.albedo_max},
            {"sphere_only", c.sphere_only},
            {"placement", {{"min", detail::vec3_json(c.placement.min)}, {"max", detail::vec3_json(c.placement.max)}}},
            {"background", detail::vec3_json(c.background)},
            {"width", c.width},                   {"height", c.height},
            {"train_views", c.train_views},       {"test_views", c.test_views},
            {"camera_distance", c.camera_distance}, {"fov_deg", c.fov_deg}};
  return j.dump(2);
}

GenConfig gen_config_from_json(const std::string& text) {
  const json j = detail::parse_json(text, "gen config");
  detail::check_keys(j,
                     {"min_primitives", "max_primitives", "density_min", "density_max", "radius_min", "radius_max",
                      "half_extent_min", "half_extent_max", "albedo_min", "albedo_max", "sphere_only", "placement",
                      "background", "width", "height", "train_views", "test_views", "camera_distance", "fov_deg"},
                     "gen config");
  GenConfig c;
  detail::read_opt(j, "min_primitives", c.min_primitives);
  detail::read_opt(j, "max_primitives", c.max_primitives);
  detail::read_opt(j, "density_min", c.density_min);
  detail::read_opt(j, "density_max", c.density_max);
  detail::read_opt(j, "radius_min", c.radius_min);
  detail::read_opt(j, "radius_max", c.radius_max);
  detail::read_opt(j, "half_extent_min", c.half_extent_min);
  detail::read_opt(j, "half_extent_max", c.half_extent_max);
  detail::read_opt(j, "albedo_min", c.albedo_min);
  detail::read_opt(j, "albedo_max", c.albedo_max);
  detail::read_opt(j, "sphere_only", c.sphere_only);
  detail::read_opt(j, "width", c.width);
  detail::read_opt(j, "height", c.height);
  detail::read_opt(j, "train_views", c.train_views);
  detail::read_opt(j, "test_views", c.test_views);
  detail::read_opt(j, "camera_distance", c.camera_distance);
  detail::read_opt(j, "fov_deg", c.fov_deg);
  if (j.contains("placement")) {
    c.placement.min = detail::vec3_from(j["placement"].at("min"), "placement.min");
    c.placement.max = detail::vec3_from(j["placement"].at("max"), "placement.max");
  }
  if (j.contains("background")) c.background = detail::vec3_from(j["background"], "background");
  c.validate();
  return c;
}

std::string scene_to_json(const SceneSpec& scene) {
  json prims = json::array();
  for (const auto& p : scene.primitives) {
    json jp = {{"density", p.density}, {"albedo", detail::vec3_json(p.albedo)}};
    if (const auto* s = std::get_if<Sphere>(&p.shape)) {
      jp["type"] = "sphere";
      jp["center"] = detail::vec3_json(s->center);
      jp["radius"] = s->radius;
    } else {
      const auto& b = std::get<Box>(p.shape);
      jp["type"] = "box";
      jp["min"] = detail::vec3_json(b.min);
      jp["max"] = detail::vec3_json(b.max);
    }
    prims.push_back(std::move(jp));
  }
  json j = {{"primitives", std::move(prims)},
            {"background", detail::vec3_json(scene.background)},
            {"bbox", {{"min", detail::vec3_json(scene.bbox.min)}, {"max", detail::vec3_json(scene.bbox.max)}}}};
  return j.dump(2);
}

SceneSpec scene_from_json(const std::string& text) {
  const json j = detail::parse_json(text, "scene");
  SceneSpec scene;
  try {
    for (const auto& jp : j.at("primitives")) {
      Primitive p;
      p.density = jp.at("density").get<double>();
      p.albedo = detail::vec3_from(jp.at("albedo"), "albedo");
      const std::string type = jp.at("type").get<std::string>();
      if (type == "sphere") {
        p.shape = Sphere{detail::vec3_from(jp.at("center"), "center"), jp.at("radius").get<double>()};
      } else if (type == "box") {
        p.shape = Box{detail::vec3_from(jp.at("min"), "min"), detail::vec3_from(jp.at("max"), "max")};
      } else {
        throw DataError("scene: unknown primitive type '" + type + "'");
      }
      scene.primitives.push_back(std::move(p));
    }
    scene.background = detail::vec3_from(j.at("background"), "background");
    scene.bbox.min = detail::vec3_from(j.at("bbox").at("min"), "bbox.min");
    scene.bbox.max = detail::vec3_from(j.at("bbox").at("max"), "bbox.max");
  } catch (const json::exception& e) {
    throw DataError(std::string("scene: ") + e.what());
  }
  scene.validate();
  return scene;
}

// ---------------------------------------------------------------------------
// Sampling and queries

SceneSpec sample_scene(Rng& rng, const GenConfig& config) {
  config.validate();
  const Vec3 lo = config.placement.min, hi = config.placement.max;
  const double room = (hi - lo).minCoeff() / 2.0;
  const int count = config.min_primitives +
                    static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(config.max_primitives - config.min_primitives + 1)));
  SceneSpec scene;
  scene.background = config.background;
  for (int i = 0; i < count; ++i) {
    Primitive p;
    const bool sphere = config.sphere_only || uniform01(rng) < 0.5;
    if (sphere) {
      const double r = uniform(rng, config.radius_min, std::min(config.radius_max, room));
      Vec3 c;
      for (int a = 0; a < 3; ++a) c[a] = uniform(rng, lo[a] + r, hi[a] - r);
      p.shape = Sphere{c, r};
    } else {
      Vec3 half, c;
      for (int a = 0; a < 3; ++a) half[a] = uniform(rng, config.half_extent_min, std::min(config.half_extent_max, room));
      for (int a = 0; a < 3; ++a) c[a] = uniform(rng, lo[a] + half[a], hi[a] - half[a]);
      p.shape = Box{c - half, c + half};
    }
    p.density = uniform(rng, config.density_min, config.density_max);
    for (int a = 0; a < 3; ++a) p.albedo[a] = uniform(rng, config.albedo_min, config.albedo_max);
    scene.primitives.push_back(std::move(p));
  }
  scene.update_bbox();
  return scene;
}

FieldSample field_query(const SceneSpec& scene, const Vec3& point) {
  for (auto it = scene.primitives.rbegin(); it != scene.primitives.rend(); ++it)
    if (it->contains(point)) return {it->density, it->albedo};
  return {};
}

OracleResult oracle_render_detailed(const SceneSpec& scene, const Ray& ray) {
  std::vector<double> cuts{ray.t_near, ray.t_far};
  for (const auto& p : scene.primitives) {
    if (auto hit = p.intersect(ray)) {
      cuts.push_back(hit->first);
      cuts.push_back(hit->second);
    }
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  OracleResult out;
  double transmittance = 1.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double length = cuts[k + 1] - cuts[k];
    if (length <= 0.0) continue;
    const FieldSample f = field_query(scene, ray.at(0.5 * (cuts[k] + cuts[k + 1])));
    if (f.sigma == 0.0) continue;
    const double absorb = std::exp(-f.sigma * length);
    out.color += transmittance * (1.0 - absorb) * f.color;
    transmittance *= absorb;
  }
  out.residual = transmittance;
  out.color += transmittance * scene.background;
  return out;
}

std::vector<Camera> orbit_cameras(const GenConfig& config, int count) {
  const Vec3 center = (config.placement.min + config.placement.max) / 2.0;
  const double focal = 0.5 * config.width / std::tan(0.5 * config.fov_deg * std::numbers::pi / 180.0);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<Camera> cams;
  cams.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) {
    const double y = 1.0 - (2.0 * i + 1.0) / count;
    const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
    const double phi = golden * i;
    const Vec3 dir(r * std::cos(phi), y, r * std::sin(phi));
    Camera cam;
    cam.width = config.width;
    cam.height = config.height;
    cam.fx = cam.fy = focal;
    cam.cx = 0.5 * config.width;
    cam.cy = 0.5 * config.height;
    cam.pose = geometry::look_at(center + config.camera_distance * dir, center, Vec3::UnitY());
    cams.push_back(cam);
  }
  return cams;
}

Splits make_splits(int total, int test_views) {
  if (test_views < 0 || test_views >= total) throw InvalidArgument("make_splits: need 0 <= test_views < total");
  Splits s;
  std::vector<bool> is_test(static_cast<std::size_t>(total), false);
  for (int k = 0; k < test_views; ++k)
    is_test[static_cast<std::size_t>((2 * k + 1) * total / (2 * test_views))] = true;
  for (int i = 0; i < total; ++i) (is_test[static_cast<std::size_t>(i)] ? s.test : s.train).push_back(i);
  return s;
}

// ---------------------------------------------------------------------------
// Datasets

std::string manifest_to_json(const DatasetManifest& m) {
  json cams = json::array();
  for (const auto& c : m.cameras) {
    json pose = json::array();
    for (int r = 0; r < 3; ++r) {
      for (int k = 0; k < 3; ++k) pose.push_back(c.pose.rotation(r, k));
      pose.push_back(c.pose.translation[r]);
    }
    cams.push_back({{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"pose", std::move(pose)}});
  }
  json j = {{"scene_id", m.scene_id},
            {"width", m.width},
            {"height", m.height},
            {"cameras", std::move(cams)},
            {"images", m.images},
            {"bbox", {{"min", detail::vec3_json(m.bbox.min)}, {"max", detail::vec3_json(m.bbox.max)}}},
            {"splits", {{"train", m.splits.train}, {"test", m.splits.test}}}};
  return j.dump(2);
}

DatasetManifest manifest_from_json(const std::string& text) {
  const json j = detail::parse_json(text, "manifest");
  DatasetManifest m;
  try {
    m.scene_id = j.at("scene_id").get<std::string>();
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    for (const auto& jc : j.at("cameras")) {
      Camera c;
      c.fx = jc.at("fx").get<double>();
      c.fy = jc.at("fy").get<double>();
      c.cx = jc.at("cx").get<double>();
      c.cy = jc.at("cy").get<double>();
      c.width = m.width;
      c.height = m.height;
      const auto pose = jc.at("pose").get<std::vector<double>>();
      if (pose.size() != 12) throw DataError("manifest: camera pose needs 12 values");
      for (int r = 0; r < 3; ++r) {
        for (int k = 0; k < 3; ++k) c.pose.rotation(r, k) = pose[static_cast<std::size_t>(r * 4 + k)];
        c.pose.translation[r] = pose[static_cast<std::size_t>(r * 4 + 3)];
      }
      c.validate();
      m.cameras.push_back(c);
    }
    m.images = j.at("images").get<std::vector<std::string>>();
    m.bbox.min = detail::vec3_from(j.at("bbox").at("min"), "bbox.min");
    m.bbox.max = detail::vec3_from(j.at("bbox").at("max"), "bbox.max");
    m.splits.train = j.at("splits").at("train").get<std::vector<int>>();
    m.splits.test = j.at("splits").at("test").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
  if (m.images.size() != m.cameras.size()) throw DataError("manifest: image count differs from camera count");
  const int n = static_cast<int>(m.cameras.size());
  for (int i : m.splits.train)
    if (i < 0 || i >= n) throw DataError("manifest: train split index out of range");
  for (int i : m.splits.test)
    if (i < 0 || i >= n) throw DataError("manifest: test split index out of range");
  return m;
}

Image render_oracle_image(const SceneSpec& scene, const Camera& camera, int threads) {
  Image img(camera.width, camera.height);
  parallel_for(static_cast<std::size_t>(camera.height), threads, [&](std::size_t row) {
    const int y = static_cast<int>(row);
    for (int x = 0; x < camera.width; ++x) {
      const Vec3 c = oracle_render(scene, geometry::ray_for_pixel(camera, x, y));
      for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = c[ch];
    }
  });
  return img;
}

DatasetManifest emit_dataset(const SceneSpec& scene, const std::vector<Camera>& cameras, const Splits& splits,
                             const std::filesystem::path& out_dir, const std::string& scene_id, int threads) {
  if (cameras.empty()) throw InvalidArgument("emit_dataset: no cameras");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create '" + out_dir.string() + "': " + ec.message());

  DatasetManifest m;
  m.scene_id = scene_id;
  m.width = cameras.front().width;
  m.height = cameras.front().height;
  m.cameras = cameras;
  m.bbox = scene.bbox;
  m.splits = splits;
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    if (cameras[i].width != m.width || cameras[i].height != m.height)
      throw InvalidArgument("emit_dataset: cameras must share one resolution");
    char name[32];
    std::snprintf(name, sizeof(name), "view_%03zu.ppm", i);
    write_ppm(out_dir / name, render_oracle_image(scene, cameras[i], threads));
    m.images.emplace_back(name);
  }
  detail::write_text_file(out_dir / "manifest.json", manifest_to_json(m));
  detail::write_text_file(out_dir / "scene.json", scene_to_json(scene));
  return m;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.dir = dir;
  ds.manifest = manifest_from_json(detail::read_text_file(dir / "manifest.json"));
  for (const auto& rel : ds.manifest.images) {
    const auto path = dir / rel;
    if (!std::filesystem::exists(path)) throw DataError("dataset image missing: '" + path.string() + "'");
    Image img = read_ppm(path);
    if (img.width != ds.manifest.width || img.height != ds.manifest.height)
      throw DataError("dataset image '" + path.string() + "' has wrong size");
    ds.images.push_back(std::move(img));
  }
  if (std::filesystem::exists(dir / "scene.json"))
    ds.scene = scene_from_json(detail::read_text_file(dir / "scene.json"));
  return ds;
}

std::optional<Ray> pixel_ray_in_box(const Camera& camera, const Aabb& bbox, double px, double py) {
  return geometry::clip_to_box(geometry::ray_for_pixel(camera, px, py), bbox);
}

std::vector<Pixel> bbox_ray_filter(const Aabb& bbox, const Camera& camera, Rng& rng, int n_rays) {
  if (n_rays < 0) throw InvalidArgument("bbox_ray_filter: negative ray count");
  if (n_rays == 0) return {};
  std::vector<Pixel> eligible;
  for (int y = 0; y < camera.height; ++y)
    for (int x = 0; x < camera.width; ++x)
      if (pixel_ray_in_box(camera, bbox, x, y)) eligible.push_back({x, y});
  if (eligible.empty()) throw InvalidArgument("bbox_ray_filter: bounding box projects to no pixels");
  std::vector<Pixel> out;
  out.reserve(static_cast<std::size_t>(n_rays));
  for (int i = 0; i < n_rays; ++i) out.push_back(eligible[uniform_index(rng, eligible.size())]);
  return out;
}

}  // namespace mrvm::scene
