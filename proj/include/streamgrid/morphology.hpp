#pragma once

#include <stdexcept>

#include "streamgrid/grid.hpp"
#include "streamgrid/trainer.hpp"

namespace streamgrid {

namespace detail {

// Separable 1D pass along one axis with window [-r, r]. OR for dilation,
// AND-with-out-of-bounds-as-zero for erosion.
inline OccupancyMask axis_pass(const OccupancyMask& in, int axis, int radius, bool dilate_mode) {
  const GridDims& d = in.dims();
  OccupancyMask out(d);
  int n[3] = {d.nx, d.ny, d.nz};
  std::size_t stride[3] = {static_cast<std::size_t>(d.ny) * d.nz, static_cast<std::size_t>(d.nz), 1};
  int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
  for (int i1 = 0; i1 < n[a1]; ++i1)
    for (int i2 = 0; i2 < n[a2]; ++i2) {
      std::size_t base = static_cast<std::size_t>(i1) * stride[a1] + static_cast<std::size_t>(i2) * stride[a2];
      for (int i = 0; i < n[axis]; ++i) {
        bool acc = !dilate_mode;
        for (int k = i - radius; k <= i + radius; ++k) {
          bool bit = (k >= 0 && k < n[axis]) ? in.get(base + static_cast<std::size_t>(k) * stride[axis]) : false;
          acc = dilate_mode ? (acc || bit) : (acc && bit);
          if (acc == dilate_mode) break;  // saturated
        }
        out.set(base + static_cast<std::size_t>(i) * stride[axis], acc);
      }
    }
  return out;
}

}  // namespace detail

// Binary dilation with a cube structuring element of side 2r+1 (Chebyshev
// ball), clipped at the borders.
inline OccupancyMask dilate(const OccupancyMask& mask, int radius) {
  if (radius < 0) throw std::invalid_argument("dilate: radius must be >= 0");
  if (radius == 0) return mask;
  OccupancyMask m = detail::axis_pass(mask, 0, radius, true);
  m = detail::axis_pass(m, 1, radius, true);
  return detail::axis_pass(m, 2, radius, true);
}

// Binary erosion; out-of-bounds neighbors count as unset.
inline OccupancyMask erode(const OccupancyMask& mask, int radius) {
  if (radius < 0) throw std::invalid_argument("erode: radius must be >= 0");
  if (radius == 0) return mask;
  OccupancyMask m = detail::axis_pass(mask, 0, radius, false);
  m = detail::axis_pass(m, 1, radius, false);
  return detail::axis_pass(m, 2, radius, false);
}

// The per-frame region of interest: dilate(M, rho_d) XOR erode(M, rho_e),
// a shell around the occupied surface.
inline OccupancyMask compute_band(const OccupancyMask& mask_prev, int rho_d, int rho_e) {
  return mask_xor(dilate(mask_prev, rho_d), erode(mask_prev, rho_e));
}

// Restores every band voxel to the grid (zero-initialized where previously
// empty) and marks the band as this round's trainable set. Pre-existing
// voxel values are preserved.
inline TrainableSet activate_band(SparseGrid& grid, const OccupancyMask& band) {
  if (!band.dims().same_counts(grid.dims())) throw std::invalid_argument("band dims mismatch");
  grid.reset_occupancy(mask_or(grid.mask(), band), VoxelData{});
  return TrainableSet{band};
}

}  // namespace streamgrid
