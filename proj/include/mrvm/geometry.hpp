// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "mrvm/diffcore.hpp"

namespace mrvm::geometry {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Rigid camera-to-world transform. Camera axes: x right, y down, z forward.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
};

struct Camera {
  double fx = 1.0, fy = 1.0, cx = 0.5, cy = 0.5;
  int width = 1, height = 1;
  Pose pose;

  Vec3 center() const { return pose.translation; }
  Vec3 forward() const { return pose.rotation.col(2); }
  /// Throws InvalidArgument if intrinsics or pose break their invariants.
  void validate() const;
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  double t_near = 0.0;
  double t_far = 0.0;

  Vec3 at(double t) const { return origin + t * direction; }
};

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  void expand(const Aabb& o) {
    min = min.cwiseMin(o.min);
    max = max.cwiseMax(o.max);
  }
};

inline constexpr double kDefaultNear = 0.05;
inline constexpr double kDefaultFar = 100.0;

/// Ray through continuous pixel coordinate (px + 0.5, py + 0.5); integer
/// input therefore hits the pixel center.
Ray ray_for_pixel(const Camera& camera, double px, double py,
                  double t_near = kDefaultNear, double t_far = kDefaultFar);

struct Projection {
  double px = 0.0;
  double py = 0.0;
  /// z-depth along the camera forward axis.
  double depth = 0.0;
  /// False when depth <= 1e-9; px/py are then meaningless.
  bool in_front = false;
};

Projection project_point(const Camera& camera, const Vec3& world_point);

/// Entry/exit parameters of the ray's line with the box, clipped to
/// [ray.t_near, ray.t_far]. Empty when they do not overlap.
std::optional<std::pair<double, double>> intersect_aabb(const Ray& ray, const Aabb& box);

/// Ray with [t_near, t_far] narrowed to the box interval, if any.
std::optional<Ray> clip_to_box(const Ray& ray, const Aabb& box);

/// Pixel-center bilinear stencil over an H x W grid flattened row-major.
/// Coordinates outside [0, W] x [0, H] clamp to the border pixels.
diff::BilinearTap bilinear_tap(int height, int width, double px, double py,
                               std::size_t row_offset = 0);

/// Samples an (H*W x D) grid at continuous pixel coordinate (px, py).
std::vector<double> bilinear_sample(const diff::Tensor& grid, int height, int width,
                                    double px, double py);

/// Camera-to-world rotation/translation looking from eye to target.
Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up);

}  // namespace mrvm::geometry
