#pragma once

#include <span>

#include "streamgrid/delta.hpp"
#include "streamgrid/grid.hpp"
#include "streamgrid/trainer.hpp"

namespace streamgrid {

// Half-resolution guide model (roughly 1/8 the capacity for dense grids).
inline SparseGrid make_pilot(const SparseGrid& grid) { return downsample(grid); }

// OR of the pilot's add/erase/remain masks, replicated to full scale: pilot
// bit p covers full-scale coords 2p..2p+1 per axis, clipped at odd borders.
inline OccupancyMask guidance_mask(const DiffMasks& pilot_masks, const GridDims& full_dims) {
  const GridDims& pd = pilot_masks.m_add.dims();
  if (pd.nx != (full_dims.nx + 1) / 2 || pd.ny != (full_dims.ny + 1) / 2 || pd.nz != (full_dims.nz + 1) / 2)
    throw std::invalid_argument("pilot dims must be ceil(full/2)");
  OccupancyMask merged = mask_or(mask_or(pilot_masks.m_add, pilot_masks.m_erase), pilot_masks.m_remain);
  OccupancyMask out(full_dims);
  merged.for_each_set([&](std::size_t idx) {
    auto [px, py, pz] = pd.coord(idx);
    for (int c = 0; c < 8; ++c) {
      int x = 2 * px + (c & 1), y = 2 * py + ((c >> 1) & 1), z = 2 * pz + ((c >> 2) & 1);
      if (x >= full_dims.nx || y >= full_dims.ny || z >= full_dims.nz) continue;
      out.set(x, y, z, true);
    }
  });
  return out;
}

// Transfers pilot add/erase results to the full grid: children of added pilot
// voxels are created (with the pilot's values) where currently unoccupied;
// children of erased pilot voxels are removed. Occupied full voxels are never
// overwritten by pilot values.
inline void fill_back(SparseGrid& grid_full, const SparseGrid& pilot_next, const DiffMasks& pilot_masks) {
  const GridDims& fd = grid_full.dims();
  const GridDims& pd = pilot_next.dims();
  if (pd.nx != (fd.nx + 1) / 2 || pd.ny != (fd.ny + 1) / 2 || pd.nz != (fd.nz + 1) / 2)
    throw std::invalid_argument("pilot dims must be ceil(full/2)");

  OccupancyMask new_mask = grid_full.mask();
  pilot_masks.m_erase.for_each_set([&](std::size_t idx) {
    auto [px, py, pz] = pd.coord(idx);
    for (int c = 0; c < 8; ++c) {
      int x = 2 * px + (c & 1), y = 2 * py + ((c >> 1) & 1), z = 2 * pz + ((c >> 2) & 1);
      if (x >= fd.nx || y >= fd.ny || z >= fd.nz) continue;
      new_mask.set(fd.linear(x, y, z), false);
    }
  });
  // Remember which full voxels existed before the adds; only new ones take
  // pilot values.
  OccupancyMask pre_add = new_mask;
  pilot_masks.m_add.for_each_set([&](std::size_t idx) {
    auto [px, py, pz] = pd.coord(idx);
    for (int c = 0; c < 8; ++c) {
      int x = 2 * px + (c & 1), y = 2 * py + ((c >> 1) & 1), z = 2 * pz + ((c >> 2) & 1);
      if (x >= fd.nx || y >= fd.ny || z >= fd.nz) continue;
      new_mask.set(fd.linear(x, y, z), true);
    }
  });
  grid_full.reset_occupancy(new_mask, VoxelData{});
  pilot_masks.m_add.for_each_set([&](std::size_t idx) {
    if (!pilot_next.occupied(idx)) return;
    const VoxelData& pv = pilot_next.voxel_at(idx);
    auto [px, py, pz] = pd.coord(idx);
    for (int c = 0; c < 8; ++c) {
      int x = 2 * px + (c & 1), y = 2 * py + ((c >> 1) & 1), z = 2 * pz + ((c >> 2) & 1);
      if (x >= fd.nx || y >= fd.ny || z >= fd.nz) continue;
      std::size_t lin = fd.linear(x, y, z);
      if (!pre_add.get(lin)) grid_full.voxel_at(lin) = pv;
    }
  });
}

// Full-scale tuning with every voxel outside the guidance mask frozen.
inline TrainStats guided_tune(SparseGrid& grid_full, std::span<const View> frames, const OccupancyMask& guidance,
                              const TrainConfig& cfg, const TrainOptions& opt, Rng& rng) {
  if (!guidance.dims().same_counts(grid_full.dims())) throw std::invalid_argument("guidance dims mismatch");
  TrainableSet trainable{mask_and(guidance, grid_full.mask())};
  return run_training(grid_full, frames, &trainable, cfg, opt, rng);
}

}  // namespace streamgrid
