#include <catch_amalgamated.hpp>

#include <cmath>

#include "streamgrid/sh.hpp"

using namespace streamgrid;

TEST_CASE("sh basis constants and pole values", "[sh]") {
  auto b = sh_basis(Vec3{0.f, 0.f, 1.f});
  CHECK(b[0] == Catch::Approx(0.2820948).epsilon(1e-6));
  CHECK(b[1] == Catch::Approx(0.0).margin(1e-7));  // (1,-1)
  CHECK(b[2] == Catch::Approx(0.4886025).epsilon(1e-6));
  CHECK(b[3] == Catch::Approx(0.0).margin(1e-7));  // (1,+1)
  CHECK(b[6] == Catch::Approx(0.31539156 * 2.0).epsilon(1e-6));

  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    Vec3 d = normalized(Vec3{rng.uniform_f(-1, 1), rng.uniform_f(-1, 1), rng.uniform_f(-1, 1)});
    auto basis = sh_basis(d);
    CHECK(basis[0] == Catch::Approx(0.2820948).epsilon(1e-6));
  }
}

TEST_CASE("sh basis parity under direction inversion", "[sh]") {
  Rng rng(3);
  for (int i = 0; i < 25; ++i) {
    Vec3 d = normalized(Vec3{rng.uniform_f(-1, 1), rng.uniform_f(-1, 1), rng.uniform_f(-1, 1)});
    auto plus = sh_basis(d);
    auto minus = sh_basis(Vec3{-d.x, -d.y, -d.z});
    CHECK(minus[0] == Catch::Approx(plus[0]));
    for (int k = 1; k <= 3; ++k) CHECK(minus[k] == Catch::Approx(-plus[k]).margin(1e-7));
    for (int k = 4; k <= 8; ++k) CHECK(minus[k] == Catch::Approx(plus[k]).margin(1e-7));
  }
}

TEST_CASE("sh basis tolerates non-unit directions by normalizing", "[sh]") {
  Vec3 d{0.f, 0.f, 3.f};
  auto b = sh_basis(d);
  CHECK(b[2] == Catch::Approx(0.4886025).epsilon(1e-6));
}

TEST_CASE("eval_color sigmoid behavior", "[sh]") {
  std::array<float, kShCoeffs> sh{};
  Vec3 d{0.f, 0.f, 1.f};
  auto rgb = eval_color(sh, d);
  CHECK(rgb[0] == Catch::Approx(0.5));
  CHECK(rgb[1] == Catch::Approx(0.5));
  CHECK(rgb[2] == Catch::Approx(0.5));

  // DC coefficient k with k*Y00 = ln 3 -> sigmoid(ln 3) = 0.75 per channel
  float k = std::log(3.f) / 0.28209479f;
  for (int ch = 0; ch < 3; ++ch) sh[ch * 9] = k;
  rgb = eval_color(sh, d);
  for (int ch = 0; ch < 3; ++ch) CHECK(rgb[ch] == Catch::Approx(0.75).epsilon(1e-5));

  // saturation is monotone in the DC coefficient
  float prev = rgb[0];
  for (float kk = 10.f; kk < 200.f; kk *= 2.f) {
    sh[0] = kk;
    float cur = eval_color(sh, d)[0];
    CHECK(cur >= prev);
    CHECK(cur <= 1.f);
    prev = cur;
  }
}

TEST_CASE("DC-only color is invariant under view rotation", "[sh]") {
  Rng rng(4);
  std::array<float, kShCoeffs> sh{};
  sh[0] = 1.3f;
  sh[9] = -0.7f;
  sh[18] = 2.1f;
  auto ref = eval_color(sh, Vec3{1.f, 0.f, 0.f});
  for (int i = 0; i < 20; ++i) {
    Vec3 d = normalized(Vec3{rng.uniform_f(-1, 1), rng.uniform_f(-1, 1), rng.uniform_f(-1, 1)});
    auto rgb = eval_color(sh, d);
    for (int ch = 0; ch < 3; ++ch) CHECK(rgb[ch] == Catch::Approx(ref[ch]).epsilon(1e-6));
  }
}

TEST_CASE("eval_color gradient w.r.t. coefficients matches finite differences", "[sh]") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Vec3 d = normalized(Vec3{rng.uniform_f(-1, 1), rng.uniform_f(-1, 1), rng.uniform_f(-1, 1)});
    auto basis = sh_basis<double>(static_cast<double>(d.x), static_cast<double>(d.y), static_cast<double>(d.z));
    std::array<double, kShCoeffs> sh;
    for (auto& c : sh) c = rng.uniform(-1.5, 1.5);

    auto color = eval_color<double>(basis, sh.data());
    const double h = 1e-4;
    for (int ch = 0; ch < 3; ++ch)
      for (int b = 0; b < 9; ++b) {
        int k = ch * 9 + b;
        // analytic: d sigmoid(z)/d sh_k = c(1-c) * Y_b
        double analytic = color[ch] * (1.0 - color[ch]) * basis[b];
        double saved = sh[k];
        sh[k] = saved + h;
        double up = eval_color<double>(basis, sh.data())[ch];
        sh[k] = saved - h;
        double dn = eval_color<double>(basis, sh.data())[ch];
        sh[k] = saved;
        double fd = (up - dn) / (2 * h);
        if (std::abs(fd) > 1e-9 || std::abs(analytic) > 1e-9)
          CHECK(std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-9}) < 1e-3);
      }
  }
}
