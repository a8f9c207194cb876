// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrvm/geometry.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace mrvm::geometry {

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidArgument("camera: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw InvalidArgument("camera: empty image size");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
    throw InvalidArgument("camera: principal point outside image");
  const Mat3& r = pose.rotation;
  if ((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9 || r.determinant() <= 0.0)
    throw InvalidArgument("camera: pose rotation is not a proper rotation");
}

Ray ray_for_pixel(const Camera& camera, double px, double py, double t_near, double t_far) {
  if (!(px >= 0.0 && px < camera.width && py >= 0.0 && py < camera.height))
    throw InvalidArgument("ray_for_pixel: pixel (" + std::to_string(px) + ", " +
                          std::to_string(py) + ") outside " + std::to_string(camera.width) + "x" +
                          std::to_string(camera.height) + " image");
  if (!(t_near > 0.0 && t_near < t_far)) throw InvalidArgument("ray_for_pixel: need 0 < t_near < t_far");
  const Vec3 d_cam((px + 0.5 - camera.cx) / camera.fx, (py + 0.5 - camera.cy) / camera.fy, 1.0);
  Ray ray;
  ray.origin = camera.pose.translation;
  ray.direction = (camera.pose.rotation * d_cam).normalized();
  ray.t_near = t_near;
  ray.t_far = t_far;
  return ray;
}

Projection project_point(const Camera& camera, const Vec3& world_point) {
  const Vec3 p = camera.pose.rotation.transpose() * (world_point - camera.pose.translation);
  Projection out;
  out.depth = p.z();
  if (p.z() <= 1e-9) return out;
  out.in_front = true;
  out.px = camera.fx * p.x() / p.z() + camera.cx;
  out.py = camera.fy * p.y() / p.z() + camera.cy;
  return out;
}

std::optional<std::pair<double, double>> intersect_aabb(const Ray& ray, const Aabb& box) {
  double lo = ray.t_near, hi = ray.t_far;
  for (int axis = 0; axis < 3; ++axis) {
    const double o = ray.origin[axis], d = ray.direction[axis];
    if (d == 0.0) {
      if (o < box.min[axis] || o > box.max[axis]) return std::nullopt;
      continue;
    }
    double t0 = (box.min[axis] - o) / d, t1 = (box.max[axis] - o) / d;
    if (t0 > t1) std::swap(t0, t1);
    lo = std::max(lo, t0);
    hi = std::min(hi, t1);
    if (lo >= hi) return std::nullopt;
  }
  return std::make_pair(lo, hi);
}

std::optional<Ray> clip_to_box(const Ray& ray, const Aabb& box) {
  auto hit = intersect_aabb(ray, box);
  if (!hit) return std::nullopt;
  Ray out = ray;
  out.t_near = hit->first;
  out.t_far = hit->second;
  return out;
}

diff::BilinearTap bilinear_tap(int height, int width, double px, double py, std::size_t row_offset) {
  const double gx = std::clamp(px - 0.5, 0.0, static_cast<double>(width - 1));
  const double gy = std::clamp(py - 0.5, 0.0, static_cast<double>(height - 1));
  const int x0 = static_cast<int>(std::floor(gx)), y0 = static_cast<int>(std::floor(gy));
  const int x1 = std::min(x0 + 1, width - 1), y1 = std::min(y0 + 1, height - 1);
  const double ax = gx - x0, ay = gy - y0;
  auto at = [&](int x, int y) {
    return row_offset + static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(x);
  };
  diff::BilinearTap tap;
  tap.index[0] = at(x0, y0);
  tap.index[1] = at(x1, y0);
  tap.index[2] = at(x0, y1);
  tap.index[3] = at(x1, y1);
  tap.weight[0] = (1.0 - ax) * (1.0 - ay);
  tap.weight[1] = ax * (1.0 - ay);
  tap.weight[2] = (1.0 - ax) * ay;
  tap.weight[3] = ax * ay;
  return tap;
}

std::vector<double> bilinear_sample(const diff::Tensor& grid, int height, int width, double px,
                                    double py) {
  if (grid.size() == 0 || height <= 0 || width <= 0 ||
      grid.rows() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width))
    throw InvalidArgument("bilinear_sample: grid " + grid.shape_string() + " does not match " +
                          std::to_string(height) + "x" + std::to_string(width));
  const auto tap = bilinear_tap(height, width, px, py);
  std::vector<double> out(grid.cols(), 0.0);
  for (int k = 0; k < 4; ++k) {
    if (tap.weight[k] == 0.0) continue;
    const auto row = grid.row_span(tap.index[k]);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += tap.weight[k] * row[c];
  }
  return out;
}

Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 view = target - eye;
  if (view.norm() < 1e-12) throw InvalidArgument("look_at: eye coincides with target");
  const Vec3 z = view.normalized();
  const Vec3 up_perp = up - up.dot(z) * z;
  if (up.norm() < 1e-12 || up_perp.norm() < 1e-6 * up.norm())
    throw InvalidArgument("look_at: up vector parallel to view direction");
  const Vec3 y = -up_perp.normalized();
  const Vec3 x = y.cross(z);
  Pose pose;
  pose.rotation.col(0) = x;
  pose.rotation.col(1) = y;
  pose.rotation.col(2) = z;
  pose.translation = eye;
  return pose;
}

}  // namespace mrvm::geometry
