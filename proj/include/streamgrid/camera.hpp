#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include "streamgrid/geometry.hpp"
#include "streamgrid/grid.hpp"

namespace streamgrid {

// ---------------------------------------------------------------------------
// Pinhole camera. Convention: x right, y down, z forward (camera looks along
// +z). `pose` is a row-major 4x4 camera-to-world rigid transform.
// ---------------------------------------------------------------------------
struct Camera {
  float fx = 0.f, fy = 0.f, cx = 0.f, cy = 0.f;
  int width = 0, height = 0;
  std::array<float, 16> pose{};  // camera-to-world, row-major

  Vec3 center() const { return {pose[3], pose[7], pose[11]}; }
  Vec3 rotate(Vec3 v) const {
    return {pose[0] * v.x + pose[1] * v.y + pose[2] * v.z,
            pose[4] * v.x + pose[5] * v.y + pose[6] * v.z,
            pose[8] * v.x + pose[9] * v.y + pose[10] * v.z};
  }
  Vec3 forward() const { return {pose[2], pose[6], pose[10]}; }

  void validate() const {
    if (!(fx > 0.f) || !(fy > 0.f)) throw std::invalid_argument("camera: focal lengths must be positive");
    if (width <= 0 || height <= 0) throw std::invalid_argument("camera: image dims must be positive");
    Vec3 c0{pose[0], pose[4], pose[8]}, c1{pose[1], pose[5], pose[9]}, c2{pose[2], pose[6], pose[10]};
    const float tol = 1e-5f;
    if (std::abs(norm(c0) - 1.f) > tol || std::abs(norm(c1) - 1.f) > tol || std::abs(norm(c2) - 1.f) > tol ||
        std::abs(dot(c0, c1)) > tol || std::abs(dot(c0, c2)) > tol || std::abs(dot(c1, c2)) > tol)
      throw std::invalid_argument("camera: rotation block is not orthonormal");
  }
};

struct Ray {
  Vec3 origin{};
  Vec3 dir{};  // unit
  float t_near = 0.f;
  float t_far = 0.f;
};

// Look-at pose builder (world up +z by default; falls back when degenerate).
inline Camera make_lookat_camera(Vec3 eye, Vec3 target, float fx, float fy, int width, int height,
                                 Vec3 up = {0.f, 0.f, 1.f}) {
  Vec3 fwd = normalized(target - eye);
  Vec3 right = cross(fwd, up);
  if (norm(right) < 1e-6f) right = cross(fwd, Vec3{0.f, 1.f, 0.f});
  right = normalized(right);
  Vec3 down = cross(fwd, right);  // y points down in camera space
  Camera cam;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = 0.5f * width;
  cam.cy = 0.5f * height;
  cam.width = width;
  cam.height = height;
  cam.pose = {right.x, down.x, fwd.x, eye.x,
              right.y, down.y, fwd.y, eye.y,
              right.z, down.z, fwd.z, eye.z,
              0.f,     0.f,    0.f,   1.f};
  return cam;
}

// Slab intersection of a ray with the grid bounding box; nullopt on a miss.
// t_near is clamped at 0 (camera inside the box starts at the origin).
inline std::optional<Ray> clip_ray_to_box(Vec3 origin, Vec3 dir, const GridDims& box) {
  float t0 = 0.f, t1 = std::numeric_limits<float>::max();
  for (int a = 0; a < 3; ++a) {
    float lo = box.world_min[a], hi = box.world_max[a];
    float o = origin[a], d = dir[a];
    if (std::abs(d) < 1e-12f) {
      if (o < lo || o > hi) return std::nullopt;
      continue;
    }
    float ta = (lo - o) / d, tb = (hi - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  return Ray{origin, dir, t0, t1};
}

// Ray through the center of pixel (px, py), clipped to the grid box.
inline std::optional<Ray> generate_ray(const Camera& cam, int px, int py, const GridDims& box) {
  Vec3 cam_dir{(static_cast<float>(px) + 0.5f - cam.cx) / cam.fx,
               (static_cast<float>(py) + 0.5f - cam.cy) / cam.fy, 1.f};
  Vec3 dir = normalized(cam.rotate(cam_dir));
  return clip_ray_to_box(cam.center(), dir, box);
}

}  // namespace streamgrid
