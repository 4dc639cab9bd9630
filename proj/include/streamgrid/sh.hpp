#pragma once

#include <array>
#include <cmath>

#include "streamgrid/geometry.hpp"
#include "streamgrid/grid.hpp"

namespace streamgrid {

// Real spherical harmonics, degree <= 2, in the graphics convention (positive
// constants, no Condon-Shortley phase). Basis order:
// (0,0), (1,-1), (1,0), (1,1), (2,-2), (2,-1), (2,0), (2,1), (2,2).
template <class Real>
inline std::array<Real, 9> sh_basis(Real dx, Real dy, Real dz) {
  Real n = std::sqrt(dx * dx + dy * dy + dz * dz);
  if (n > Real(0)) {
    dx /= n;
    dy /= n;
    dz /= n;
  }
  constexpr Real c0 = Real(0.28209479177387814);  // 1 / (2 sqrt(pi))
  constexpr Real c1 = Real(0.4886025119029199);   // sqrt(3 / (4 pi))
  constexpr Real c2a = Real(1.0925484305920792);  // sqrt(15 / (4 pi))
  constexpr Real c2b = Real(0.31539156525252005); // sqrt(5 / (16 pi))
  constexpr Real c2c = Real(0.5462742152960396);  // sqrt(15 / (16 pi))
  return {c0,
          c1 * dy,
          c1 * dz,
          c1 * dx,
          c2a * dx * dy,
          c2a * dy * dz,
          c2b * (Real(3) * dz * dz - Real(1)),
          c2a * dx * dz,
          c2c * (dx * dx - dy * dy)};
}

inline std::array<float, 9> sh_basis(Vec3 d) { return sh_basis<float>(d.x, d.y, d.z); }

template <class Real>
inline Real sigmoid(Real x) {
  return Real(1) / (Real(1) + std::exp(-x));
}

// View-dependent color: per channel, sigmoid of the SH expansion.
template <class Real>
inline std::array<Real, 3> eval_color(const std::array<Real, 9>& basis, const Real* sh27) {
  std::array<Real, 3> rgb;
  for (int ch = 0; ch < 3; ++ch) {
    Real z = Real(0);
    for (int b = 0; b < 9; ++b) z += sh27[ch * 9 + b] * basis[b];
    rgb[ch] = sigmoid(z);
  }
  return rgb;
}

inline std::array<float, 3> eval_color(const std::array<float, kShCoeffs>& sh, Vec3 d) {
  auto basis = sh_basis(d);
  return eval_color<float>(basis, sh.data());
}

}  // namespace streamgrid
