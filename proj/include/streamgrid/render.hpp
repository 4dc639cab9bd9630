#pragma once

#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "streamgrid/camera.hpp"
#include "streamgrid/common.hpp"
#include "streamgrid/grid.hpp"
#include "streamgrid/image.hpp"
#include "streamgrid/sh.hpp"

namespace streamgrid {

struct RaySample {
  float t = 0.f;      // depth along the ray
  float sigma = 0.f;  // activated opacity
  Vec3 rgb{};
  float delta = 0.f;  // segment length
};

inline float default_step(const GridDims& dims) { return 0.5f * dims.min_spacing(); }

inline int sample_count(const Ray& ray, float step) {
  float span = ray.t_far - ray.t_near;
  if (!(span > 0.f)) return 0;
  int m = static_cast<int>(std::floor(span / step));
  return m < 0 ? 0 : m;
}

// Uniform samples at t = t_near + (j + 0.5) * step. Samples whose whole
// stencil is unoccupied are emitted with sigma = 0.
inline std::vector<RaySample> march_ray(const SparseGrid& grid, const Ray& ray, float step, Vec3 view_dir) {
  int m = sample_count(ray, step);
  std::vector<RaySample> out;
  out.reserve(static_cast<std::size_t>(m));
  auto basis = sh_basis(view_dir);
  for (int j = 0; j < m; ++j) {
    float t = ray.t_near + (static_cast<float>(j) + 0.5f) * step;
    Vec3 p = ray.origin + t * ray.dir;
    RaySample s;
    s.t = t;
    s.delta = step;
    auto [sigma_raw, sh] = sample_trilinear(grid, p);
    s.sigma = activate_sigma(sigma_raw);
    auto rgb = eval_color<float>(basis, sh.data());
    s.rgb = {rgb[0], rgb[1], rgb[2]};
    out.push_back(s);
  }
  return out;
}

// Front-to-back alpha compositing. The transmittance at sample i is
// exp(-prefix_sum(sigma_j * delta_j)); the prefix sum accumulates in sample
// order, which pins the float result bit-for-bit.
inline std::pair<Vec3, float> composite(std::span<const RaySample> samples) {
  float optical = 0.f;
  Vec3 color{};
  for (const RaySample& s : samples) {
    float od = s.sigma * s.delta;
    float transmittance = std::exp(-optical);
    float alpha = 1.f - std::exp(-od);
    float w = transmittance * alpha;
    color.x += w * s.rgb.x;
    color.y += w * s.rgb.y;
    color.z += w * s.rgb.z;
    optical += od;
  }
  return {color, std::exp(-optical)};
}

// Fused march + composite for one ray, skipping fully-unoccupied stencils.
// Skipped samples contribute sigma = 0 exactly, so the result is bit-identical
// to composite(march_ray(...)).
inline Vec3 composite_ray(const SparseGrid& grid, const Ray& ray, float step, Vec3 view_dir, Vec3 background) {
  int m = sample_count(ray, step);
  auto basis = sh_basis(view_dir);
  float optical = 0.f;
  Vec3 color{};
  for (int j = 0; j < m; ++j) {
    float t = ray.t_near + (static_cast<float>(j) + 0.5f) * step;
    Vec3 p = ray.origin + t * ray.dir;
    Stencil<float> st = gather_stencil<float>(grid, p);
    if (!st.any_occupied) continue;
    float sigma_raw = 0.f;
    std::array<float, kShCoeffs> sh{};
    for (int c = 0; c < 8; ++c) {
      if (st.slots[c] < 0) continue;
      const VoxelData& v = grid.voxels()[static_cast<std::size_t>(st.slots[c])];
      float w = st.weights[c];
      sigma_raw += w * v.sigma;
      for (int k = 0; k < kShCoeffs; ++k) sh[k] += w * v.sh[k];
    }
    float sigma = activate_sigma(sigma_raw);
    auto rgb = eval_color<float>(basis, sh.data());
    float od = sigma * step;
    float transmittance = std::exp(-optical);
    float alpha = 1.f - std::exp(-od);
    float w = transmittance * alpha;
    color.x += w * rgb[0];
    color.y += w * rgb[1];
    color.z += w * rgb[2];
    optical += od;
  }
  float t_final = std::exp(-optical);
  color.x += t_final * background.x;
  color.y += t_final * background.y;
  color.z += t_final * background.z;
  return color;
}

struct RenderOptions {
  Vec3 background{0.f, 0.f, 0.f};
  float step_scale = 0.5f;  // step = step_scale * min voxel edge
  int threads = 1;
};

// Per pixel: composited color plus T_final * background; rays that miss the
// box get the background. Parallel over rows; the grid is read-only here.
inline Image render_image(const SparseGrid& grid, const Camera& cam, const RenderOptions& opt = {}) {
  Image img(cam.width, cam.height);
  float step = opt.step_scale * grid.dims().min_spacing();
  parallel_for(static_cast<std::size_t>(cam.height), opt.threads, [&](std::size_t y0, std::size_t y1, int) {
    for (std::size_t y = y0; y < y1; ++y) {
      for (int x = 0; x < cam.width; ++x) {
        auto ray = generate_ray(cam, x, static_cast<int>(y), grid.dims());
        Vec3 c = ray ? composite_ray(grid, *ray, step, ray->dir, opt.background) : opt.background;
        float* px = img.pixel(x, static_cast<int>(y));
        px[0] = c.x;
        px[1] = c.y;
        px[2] = c.z;
      }
    }
  });
  return img;
}

}  // namespace streamgrid
