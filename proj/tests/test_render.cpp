#include <catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "streamgrid/dataset.hpp"
#include "streamgrid/render.hpp"

using namespace streamgrid;

namespace {
GridDims unit_box(int n) { return GridDims(n, n, n, Vec3{-1, -1, -1}, Vec3{1, 1, 1}); }

SparseGrid solid_grid(const GridDims& d, float sigma, Vec3 color) {
  OccupancyMask mask(d);
  std::vector<VoxelData> voxels;
  const float y00 = 0.28209479f;
  for (std::size_t i = 0; i < d.voxel_count(); ++i) {
    mask.set(i, true);
    VoxelData v;
    v.sigma = sigma;
    for (int ch = 0; ch < 3; ++ch) v.sh[ch * 9] = std::log(color[ch] / (1.f - color[ch])) / y00;
    voxels.push_back(v);
  }
  return SparseGrid(d, std::move(mask), std::move(voxels));
}
}  // namespace

TEST_CASE("generate_ray clips to the box and honors pixel centers", "[render]") {
  GridDims box = unit_box(4);
  Camera cam = make_lookat_camera(Vec3{0, 0, 0}, Vec3{0, 0, 5}, 40.f, 40.f, 32, 32);

  // camera inside the box: t_near clamps to 0, t_far is the +z face distance
  auto ray = generate_ray(cam, 15, 15, box);  // principal pixel (cx=16 -> px+0.5=15.5... use near-center)
  REQUIRE(ray.has_value());
  CHECK(ray->t_near == 0.f);
  CHECK(ray->t_far > 0.f);

  // principal-point pixel: direction equals the camera forward axis
  Camera cam2 = cam;
  cam2.cx = 15.5f;
  cam2.cy = 15.5f;  // so pixel (15,15) center hits the principal point exactly
  auto ray2 = generate_ray(cam2, 15, 15, box);
  REQUIRE(ray2.has_value());
  Vec3 fwd = cam2.forward();
  CHECK(ray2->dir.x == Catch::Approx(fwd.x).margin(1e-6));
  CHECK(ray2->dir.y == Catch::Approx(fwd.y).margin(1e-6));
  CHECK(ray2->dir.z == Catch::Approx(fwd.z).margin(1e-6));
  CHECK(ray2->t_far == Catch::Approx(1.0).epsilon(1e-4));  // distance to z=+1 face

  // ray parallel to a face, outside the box: miss
  auto miss = clip_ray_to_box(Vec3{0.f, 2.f, -5.f}, Vec3{0.f, 0.f, 1.f}, box);
  CHECK(!miss.has_value());
}

TEST_CASE("march_ray sample schedule and empty-grid behavior", "[render]") {
  GridDims box = unit_box(4);
  SparseGrid empty(box);
  Ray ray{Vec3{-2.f, 0.01f, 0.02f}, Vec3{1.f, 0.f, 0.f}, 1.f, 3.f};

  auto samples = march_ray(empty, ray, 0.25f, ray.dir);
  CHECK(samples.size() == 8);  // floor(2.0 / 0.25)
  for (auto& s : samples) {
    CHECK(s.sigma == 0.f);
    CHECK(s.delta == 0.25f);
  }

  // span shorter than the step: zero samples, never negative
  Ray tiny{ray.origin, ray.dir, 1.f, 1.1f};
  CHECK(march_ray(empty, tiny, 0.25f, ray.dir).empty());

  // constant grid: all samples share sigma, delta = step
  SparseGrid solid = solid_grid(box, 1.7f, Vec3{0.5f, 0.5f, 0.5f});
  auto s2 = march_ray(solid, ray, 0.25f, ray.dir);
  REQUIRE(!s2.empty());
  for (auto& s : s2) {
    CHECK(s.sigma == Catch::Approx(1.7).epsilon(1e-5));
    CHECK(s.delta == 0.25f);
  }
}

TEST_CASE("composite hand-derived cases", "[render]") {
  float ln2 = std::log(2.f);

  std::vector<RaySample> one = {{0.5f, ln2, Vec3{1, 0, 0}, 1.f}};
  auto [c1, t1] = composite(one);
  CHECK(c1.x == Catch::Approx(0.5).margin(1e-7));
  CHECK(c1.y == 0.f);
  CHECK(t1 == Catch::Approx(0.5).margin(1e-7));

  std::vector<RaySample> zeros(5, RaySample{0.f, 0.f, Vec3{1, 1, 1}, 0.3f});
  auto [c0, t0] = composite(zeros);
  CHECK(c0.x == 0.f);
  CHECK(t0 == 1.f);

  // two samples with sigma*delta = ln 2 each: weights 0.5 and 0.25
  Vec3 col1{0.2f, 0.4f, 0.8f}, col2{1.f, 0.f, 0.5f};
  std::vector<RaySample> two = {{0.5f, ln2, col1, 1.f}, {1.5f, ln2, col2, 1.f}};
  auto [c2, t2] = composite(two);
  CHECK(c2.x == Catch::Approx(0.5 * col1.x + 0.25 * col2.x).margin(1e-7));
  CHECK(c2.y == Catch::Approx(0.5 * col1.y + 0.25 * col2.y).margin(1e-7));
  CHECK(c2.z == Catch::Approx(0.5 * col1.z + 0.25 * col2.z).margin(1e-7));
  CHECK(t2 == Catch::Approx(0.25).margin(1e-7));
}

TEST_CASE("composite matches the brute-force reference bit-for-bit", "[render]") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<RaySample> samples(rng.below(40));
    for (auto& s : samples) {
      s.sigma = rng.coin(0.2) ? 0.f : rng.uniform_f(0.f, 4.f);
      s.delta = rng.uniform_f(0.01f, 0.5f);
      s.rgb = Vec3{rng.uniform_f(0, 1), rng.uniform_f(0, 1), rng.uniform_f(0, 1)};
    }
    auto [c, t] = composite(samples);
    auto [rc, rt] = oracles::reference_composite(samples);
    CHECK(c.x == rc.x);  // bitwise
    CHECK(c.y == rc.y);
    CHECK(c.z == rc.z);
    CHECK(t == rt);
  }
}

TEST_CASE("transmittance is non-increasing and starts at 1", "[render]") {
  Rng rng(23);
  std::vector<RaySample> samples(30);
  for (auto& s : samples) {
    s.sigma = rng.uniform_f(0.f, 3.f);
    s.delta = 0.1f;
    s.rgb = Vec3{0.5f, 0.5f, 0.5f};
  }
  float optical = 0.f, prev = 1.f;
  for (auto& s : samples) {
    float T = std::exp(-optical);
    CHECK(T <= prev);
    prev = T;
    optical += s.sigma * s.delta;
  }
  CHECK(std::exp(-0.f) == 1.f);
}

TEST_CASE("render_image equals the single-threaded reference renderer bit-for-bit", "[render]") {
  Rng rng(31);
  GridDims box = unit_box(8);
  SparseGrid g = oracles::random_grid(rng, box, 0.35);
  for (auto& v : g.voxels()) v.sigma = std::abs(v.sigma);  // plausible densities
  Camera cam = make_lookat_camera(Vec3{0.2f, -3.f, 1.0f}, Vec3{0, 0, 0}, 48.f, 48.f, 40, 40);
  Vec3 bg{0.1f, 0.2f, 0.3f};

  RenderOptions opt;
  opt.background = bg;
  opt.threads = 2;
  Image fast = render_image(g, cam, opt);
  Image ref = oracles::reference_render(g, cam, bg);
  REQUIRE(fast.rgb.size() == ref.rgb.size());
  for (std::size_t i = 0; i < fast.rgb.size(); ++i) REQUIRE(fast.rgb[i] == ref.rgb[i]);
}

TEST_CASE("render_image: empty grid gives background, opaque slab saturates", "[render]") {
  GridDims box = unit_box(4);
  SparseGrid empty(box);
  Camera cam = make_lookat_camera(Vec3{0, -4, 0}, Vec3{0, 0, 0}, 30.f, 30.f, 16, 16);
  Vec3 bg{0.25f, 0.5f, 0.75f};
  RenderOptions opt;
  opt.background = bg;
  Image img = render_image(empty, cam, opt);
  for (int i = 0; i < 16 * 16; ++i) {
    CHECK(img.rgb[3 * i + 0] == bg.x);
    CHECK(img.rgb[3 * i + 1] == bg.y);
    CHECK(img.rgb[3 * i + 2] == bg.z);
  }

  Vec3 slab_color{0.8f, 0.3f, 0.1f};
  SparseGrid solid = solid_grid(box, 500.f, slab_color);
  opt.background = Vec3{0, 0, 0};
  Image s = render_image(solid, cam, opt);
  const float* center = s.pixel(8, 8);
  CHECK(center[0] == Catch::Approx(slab_color.x).margin(2e-3));
  CHECK(center[1] == Catch::Approx(slab_color.y).margin(2e-3));
  CHECK(center[2] == Catch::Approx(slab_color.z).margin(2e-3));
}

TEST_CASE("rendered channels stay in [0,1] after background compositing", "[render]") {
  Rng rng(37);
  GridDims box = unit_box(6);
  SparseGrid g = oracles::random_grid(rng, box, 0.5);
  for (auto& v : g.voxels()) v.sigma = std::abs(v.sigma) * 2.f;
  Camera cam = make_lookat_camera(Vec3{3, 1, 2}, Vec3{0, 0, 0}, 40.f, 40.f, 24, 24);
  RenderOptions opt;
  opt.background = Vec3{0.9f, 0.05f, 0.5f};
  Image img = render_image(g, cam, opt);
  for (float v : img.rgb) {
    CHECK(v >= 0.f);
    CHECK(v <= 1.f);
  }
}

TEST_CASE("halving the step reduces quadrature error monotonically", "[render]") {
  SyntheticScene scene;
  scene.dims = GridDims(32, 32, 32, Vec3{-1, -1, -1}, Vec3{1, 1, 1});
  scene.center0 = Vec3{0.05f, -0.1f, 0.1f};
  scene.radius = 0.55f;
  scene.edge_width = 0.3f;
  scene.sigma_max = 4.f;
  SparseGrid g = voxelize_scene(scene, 0);

  Ray ray{Vec3{-3.f, 0.02f, 0.05f}, Vec3{1.f, 0.f, 0.f}, 2.f, 4.f};
  auto render_at = [&](float step) {
    auto s = march_ray(g, ray, step, ray.dir);
    return composite(s).first;
  };
  Vec3 truth = render_at(0.25f / 16.f);
  double err_prev = 1e9;
  for (float step : {0.25f, 0.125f, 0.0625f}) {
    Vec3 c = render_at(step);
    double err = std::abs(c.x - truth.x) + std::abs(c.y - truth.y) + std::abs(c.z - truth.z);
    CHECK(err < err_prev);
    err_prev = err;
  }
}
