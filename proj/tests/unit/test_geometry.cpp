// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <Eigen/LU>
#include <cmath>

#include "doctest.h"
#include "mrvm/geometry.hpp"
#include "mrvm/rng.hpp"

using namespace mrvm;
using namespace mrvm::geometry;

namespace {

Camera random_camera(Rng& rng) {
  Camera c;
  c.width = 40;
  c.height = 30;
  c.fx = uniform(rng, 20.0, 80.0);
  c.fy = uniform(rng, 20.0, 80.0);
  c.cx = uniform(rng, 10.0, 30.0);
  c.cy = uniform(rng, 8.0, 22.0);
  const Vec3 eye(uniform(rng, -3, 3), uniform(rng, -3, 3), uniform(rng, 2, 4));
  c.pose = look_at(eye, Vec3(uniform(rng, -0.2, 0.2), 0.0, 0.0), Vec3(0, 1, 0));
  return c;
}

}  // namespace

TEST_CASE("principal point ray follows the optical axis") {
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const Camera c = random_camera(rng);
    const Ray r = ray_for_pixel(c, c.cx - 0.5, c.cy - 0.5);
    CHECK((r.direction - c.forward()).norm() < 1e-12);
  }
}

TEST_CASE("canonical camera looks down +z") {
  Camera c;
  const Ray r = ray_for_pixel(c, 0, 0);
  CHECK(r.direction.x() == 0.0);
  CHECK(r.direction.y() == 0.0);
  CHECK(r.direction.z() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("adjacent pixels subtend about 1/fx") {
  Camera c;
  c.width = c.height = 64;
  c.fx = c.fy = 500.0;
  c.cx = c.cy = 32.0;
  const Ray a = ray_for_pixel(c, 31.5, 31.5);
  const Ray b = ray_for_pixel(c, 32.5, 31.5);
  const double angle = std::acos(std::clamp(a.direction.dot(b.direction), -1.0, 1.0));
  CHECK(angle == doctest::Approx(1.0 / c.fx).epsilon(1e-6));
}

TEST_CASE("pixels outside the image are rejected") {
  Camera c;
  c.width = c.height = 4;
  c.cx = c.cy = 2;
  CHECK_THROWS_AS(ray_for_pixel(c, -0.1, 0), InvalidArgument);
  CHECK_THROWS_AS(ray_for_pixel(c, 4, 0), InvalidArgument);
  CHECK_THROWS_AS(ray_for_pixel(c, 0, 4), InvalidArgument);
  CHECK_NOTHROW(ray_for_pixel(c, 3.99, 3.99));
}

TEST_CASE("projection inverts pixel rays") {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const Camera c = random_camera(rng);
    const double u = uniform(rng, 0, c.width - 1e-3), v = uniform(rng, 0, c.height - 1e-3);
    const Ray r = ray_for_pixel(c, u, v);
    const double t = uniform(rng, 0.1, 10.0);
    const Projection p = project_point(c, r.at(t));
    REQUIRE(p.in_front);
    CHECK(std::abs(p.px - (u + 0.5)) < 1e-9);
    CHECK(std::abs(p.py - (v + 0.5)) < 1e-9);
    CHECK(std::abs(p.depth - t * r.direction.dot(c.forward())) < 1e-9);
  }
}

TEST_CASE("camera center and points behind are flagged") {
  Rng rng(5);
  const Camera c = random_camera(rng);
  CHECK_FALSE(project_point(c, c.center()).in_front);
  CHECK_FALSE(project_point(c, c.center() - 2.0 * c.forward()).in_front);
  const Projection axis = project_point(c, c.center() + 3.0 * c.forward());
  CHECK(axis.in_front);
  CHECK(std::abs(axis.px - c.cx) < 1e-9);
  CHECK(std::abs(axis.py - c.cy) < 1e-9);
}

TEST_CASE("bilinear sampling is exact on nodes and linear between them") {
  const int h = 5, w = 7;
  diff::Tensor grid(h * w, 2);
  Rng rng(2);
  for (auto& v : grid.values()) v = uniform(rng, -1, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto s = bilinear_sample(grid, h, w, x + 0.5, y + 0.5);
      CHECK(s[0] == grid(y * w + x, 0));
      CHECK(s[1] == grid(y * w + x, 1));
    }
  const auto mid = bilinear_sample(grid, h, w, 2.0, 1.5);
  CHECK(mid[0] == doctest::Approx(0.5 * (grid(w + 1, 0) + grid(w + 2, 0))).epsilon(1e-14));
  for (double a : {0.1, 0.37, 0.8}) {
    const auto s = bilinear_sample(grid, h, w, 3.5 + a, 2.5);
    const double expect = (1 - a) * grid(2 * w + 3, 1) + a * grid(2 * w + 4, 1);
    CHECK(std::abs(s[1] - expect) < 1e-14);
  }

  diff::Tensor flat(h * w, 3, 0.25);
  for (double px : {-3.0, 0.0, 2.2, 6.9, 12.0}) {
    const auto s = bilinear_sample(flat, h, w, px, 1.3);
    for (double v : s) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  }
}

TEST_CASE("bilinear gradients match finite differences") {
  const int h = 3, w = 4;
  diff::ParamStore store;
  auto& g = store.add("grid", h * w, 2);
  Rng rng(8);
  for (auto& v : g.data) v = uniform(rng, -1, 1);
  std::vector<diff::BilinearTap> taps;
  for (int i = 0; i < 5; ++i) taps.push_back(bilinear_tap(h, w, uniform(rng, -1, 5), uniform(rng, -1, 4)));
  auto loss = [&](diff::Tape&, const diff::Bindings& b) {
    const diff::Var y = diff::bilinear(b["grid"], taps);
    return diff::sum(diff::mul(y, y));
  };
  const auto report = diff::finite_diff_check(loss, store, 1e-5);
  CHECK(report.max_rel_error <= 1e-4);
}

TEST_CASE("look_at builds the expected frame") {
  const Pose p = look_at(Vec3(0, 0, -1), Vec3::Zero(), Vec3(0, 1, 0));
  CHECK((p.rotation.col(2) - Vec3(0, 0, 1)).norm() < 1e-15);
  CHECK((p.translation - Vec3(0, 0, -1)).norm() == 0.0);
  CHECK(std::abs(p.rotation.determinant() - 1.0) < 1e-12);
  CHECK_THROWS_AS(look_at(Vec3(0, 0, -1), Vec3::Zero(), Vec3(0, 0, 2)), InvalidArgument);
  CHECK_THROWS_AS(look_at(Vec3::Zero(), Vec3::Zero(), Vec3(0, 1, 0)), InvalidArgument);
}

TEST_CASE("box intersection clips to the ray range") {
  Ray r;
  r.origin = Vec3(0, 0, -5);
  r.direction = Vec3(0, 0, 1);
  r.t_near = 0.1;
  r.t_far = 100;
  const Aabb box{Vec3::Constant(-1), Vec3::Constant(1)};
  const auto hit = intersect_aabb(r, box);
  REQUIRE(hit);
  CHECK(hit->first == doctest::Approx(4.0));
  CHECK(hit->second == doctest::Approx(6.0));
  r.origin = Vec3(2, 0, -5);
  CHECK_FALSE(intersect_aabb(r, box));
  r.origin = Vec3(0, 0, 0);
  const auto inside = clip_to_box(r, box);
  REQUIRE(inside);
  CHECK(inside->t_near == 0.1);
  CHECK(inside->t_far == doctest::Approx(1.0));
}
