#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "streamgrid/common.hpp"
#include "streamgrid/grid.hpp"

namespace streamgrid {

// ---------------------------------------------------------------------------
// Per-frame model difference. The stored unit is: the next occupancy mask,
// the remain mask, half-precision values for added voxels, and half-precision
// value differences for remain voxels. Add/erase masks are recomputed from
// the previous mask at apply time.
// ---------------------------------------------------------------------------
struct DiffMasks {
  OccupancyMask m_add;
  OccupancyMask m_erase;
  OccupancyMask m_remain;
};

struct FrameDelta {
  int frame_index = 0;
  int nx = 0, ny = 0, nz = 0;
  float epsilon = 0.f;
  OccupancyMask mask_next;
  OccupancyMask m_remain;
  std::vector<std::uint16_t> payload_add;     // n_add * 28 halfs, sigma first
  std::vector<std::uint16_t> payload_remain;  // n_remain * 28 half diffs, sigma first
  // Overlap count before thresholding; known after encode, absent after parse.
  std::optional<std::size_t> overlap_voxels;
};

// Eq-style mask computation: m_add = next & ~prev, m_erase = prev & ~next,
// m_remain = prev & next gated by L1(sh diff) > epsilon (strict). The
// optional sigma gate additionally keeps overlap voxels whose opacity moved
// by more than sigma_eps, so opacity-only changes are not dropped.
inline DiffMasks compute_masks(const OccupancyMask& mask_prev, const OccupancyMask& mask_next,
                               std::span<const float> l1_sh_overlap, float epsilon,
                               std::span<const float> abs_sigma_overlap = {}, float sigma_eps = 0.f) {
  if (!mask_prev.dims().same_counts(mask_next.dims())) throw std::invalid_argument("mask dims mismatch");
  if (epsilon < 0.f) throw std::invalid_argument("epsilon must be >= 0");
  DiffMasks out{mask_andnot(mask_next, mask_prev), mask_andnot(mask_prev, mask_next),
                OccupancyMask(mask_prev.dims())};
  OccupancyMask overlap = mask_and(mask_prev, mask_next);
  std::size_t i = 0;
  overlap.for_each_set([&](std::size_t idx) {
    if (i >= l1_sh_overlap.size()) throw std::invalid_argument("l1 diff span shorter than overlap");
    bool keep = l1_sh_overlap[i] > epsilon;
    if (!keep && !abs_sigma_overlap.empty()) keep = abs_sigma_overlap[i] > sigma_eps;
    if (keep) out.m_remain.set(idx, true);
    ++i;
  });
  return out;
}

// Convenience overload computing the diffs from two grids.
inline DiffMasks compute_masks(const SparseGrid& grid_prev, const SparseGrid& grid_next, float epsilon,
                               float sigma_eps) {
  OccupancyMask overlap = mask_and(grid_prev.mask(), grid_next.mask());
  std::vector<float> l1, dsig;
  overlap.for_each_set([&](std::size_t idx) {
    const VoxelData& a = grid_prev.voxel_at(idx);
    const VoxelData& b = grid_next.voxel_at(idx);
    float acc = 0.f;
    for (int k = 0; k < kShCoeffs; ++k) acc += std::abs(b.sh[k] - a.sh[k]);
    l1.push_back(acc);
    dsig.push_back(std::abs(b.sigma - a.sigma));
  });
  return compute_masks(grid_prev.mask(), grid_next.mask(), l1, epsilon, dsig, sigma_eps);
}

// Builds the per-frame delta. Payloads are quantized to IEEE-754 binary16
// (round-to-nearest-even); bytes are deterministic for identical inputs.
inline FrameDelta encode_delta(const SparseGrid& grid_prev, const SparseGrid& grid_next, float epsilon,
                               float sigma_eps = 1e-3f, int frame_index = 0) {
  if (!grid_prev.dims().same_counts(grid_next.dims())) throw std::invalid_argument("grid dims mismatch");
  DiffMasks masks = compute_masks(grid_prev, grid_next, epsilon, sigma_eps);

  FrameDelta d;
  d.frame_index = frame_index;
  d.nx = grid_next.dims().nx;
  d.ny = grid_next.dims().ny;
  d.nz = grid_next.dims().nz;
  d.epsilon = epsilon;
  d.mask_next = grid_next.mask();
  d.m_remain = masks.m_remain;
  d.overlap_voxels = mask_and(grid_prev.mask(), grid_next.mask()).popcount();

  masks.m_add.for_each_set([&](std::size_t idx) {
    const VoxelData& v = grid_next.voxel_at(idx);
    d.payload_add.push_back(float_to_half(v.sigma));
    for (int k = 0; k < kShCoeffs; ++k) d.payload_add.push_back(float_to_half(v.sh[k]));
  });
  masks.m_remain.for_each_set([&](std::size_t idx) {
    const VoxelData& a = grid_prev.voxel_at(idx);
    const VoxelData& b = grid_next.voxel_at(idx);
    d.payload_remain.push_back(float_to_half(b.sigma - a.sigma));
    for (int k = 0; k < kShCoeffs; ++k) d.payload_remain.push_back(float_to_half(b.sh[k] - a.sh[k]));
  });
  return d;
}

// V^i = V^{i-1} + delta_i. Occupancy becomes mask_next exactly; added voxels
// take the decoded payload, remain voxels are incremented by decoded diffs,
// untouched voxels carry over bit-identically.
inline SparseGrid apply_delta(const SparseGrid& grid_prev, const FrameDelta& d) {
  const GridDims& pd = grid_prev.dims();
  if (pd.nx != d.nx || pd.ny != d.ny || pd.nz != d.nz) throw std::invalid_argument("delta dims mismatch");
  OccupancyMask m_add = mask_andnot(d.mask_next, grid_prev.mask());
  std::size_t n_add = m_add.popcount();
  std::size_t n_remain = d.m_remain.popcount();
  if (d.payload_add.size() != n_add * kVoxelFloats) throw std::runtime_error("corrupt delta: add payload length");
  if (d.payload_remain.size() != n_remain * kVoxelFloats)
    throw std::runtime_error("corrupt delta: remain payload length");

  std::vector<VoxelData> voxels;
  voxels.reserve(d.mask_next.popcount());
  std::size_t add_i = 0;
  std::size_t rem_i = 0;
  d.mask_next.for_each_set([&](std::size_t idx) {
    VoxelData v;
    if (m_add.get(idx)) {
      const std::uint16_t* p = d.payload_add.data() + (add_i++) * kVoxelFloats;
      v.sigma = half_to_float(p[0]);
      for (int k = 0; k < kShCoeffs; ++k) v.sh[k] = half_to_float(p[k + 1]);
    } else {
      v = grid_prev.voxel_at(idx);
      if (d.m_remain.get(idx)) {
        const std::uint16_t* p = d.payload_remain.data() + (rem_i++) * kVoxelFloats;
        v.sigma += half_to_float(p[0]);
        for (int k = 0; k < kShCoeffs; ++k) v.sh[k] += half_to_float(p[k + 1]);
      }
    }
    voxels.push_back(v);
  });
  GridDims dims(d.nx, d.ny, d.nz, pd.world_min, pd.world_max);
  return SparseGrid(dims, d.mask_next, std::move(voxels));
}

// ---------------------------------------------------------------------------
// Delta container: magic "SDLT", u32 version=1, u32 frame_index, 3x u32 dims,
// f32 epsilon, then a DEFLATE-compressed body of
//   [packed mask_next][packed m_remain]
//   [u32 n_add][n_add * 28 halfs][u32 n_remain][n_remain * 28 halfs]
// all little-endian, voxel order = mask-iteration order (row-major z fastest).
// ---------------------------------------------------------------------------
inline constexpr char kDeltaMagic[4] = {'S', 'D', 'L', 'T'};

inline std::vector<std::uint8_t> serialize_delta(const FrameDelta& d) {
  ByteWriter body;
  auto mn = d.mask_next.packed_bytes();
  auto mr = d.m_remain.packed_bytes();
  body.put_bytes(mn.data(), mn.size());
  body.put_bytes(mr.data(), mr.size());
  body.put_u32(static_cast<std::uint32_t>(d.payload_add.size() / kVoxelFloats));
  for (std::uint16_t h : d.payload_add) body.put_u16(h);
  body.put_u32(static_cast<std::uint32_t>(d.payload_remain.size() / kVoxelFloats));
  for (std::uint16_t h : d.payload_remain) body.put_u16(h);

  ByteWriter out;
  out.put_magic(kDeltaMagic);
  out.put_u32(1);  // version
  out.put_u32(static_cast<std::uint32_t>(d.frame_index));
  out.put_u32(static_cast<std::uint32_t>(d.nx));
  out.put_u32(static_cast<std::uint32_t>(d.ny));
  out.put_u32(static_cast<std::uint32_t>(d.nz));
  out.put_f32(d.epsilon);
  auto compressed = zlib_compress(body.bytes());
  out.put_bytes(compressed.data(), compressed.size());
  return out.take();
}

inline FrameDelta parse_delta(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (!r.expect_magic(kDeltaMagic)) throw std::runtime_error("bad magic: not a delta file");
  std::uint32_t version = r.get_u32();
  if (version != 1) throw std::runtime_error("unsupported delta version " + std::to_string(version));
  FrameDelta d;
  d.frame_index = static_cast<int>(r.get_u32());
  d.nx = static_cast<int>(r.get_u32());
  d.ny = static_cast<int>(r.get_u32());
  d.nz = static_cast<int>(r.get_u32());
  d.epsilon = r.get_f32();
  if (d.nx < 2 || d.ny < 2 || d.nz < 2) throw std::runtime_error("corrupt delta: bad dims");

  std::vector<std::uint8_t> comp(r.remaining());
  r.get_bytes(comp.data(), comp.size());
  std::vector<std::uint8_t> body = zlib_decompress(comp);
  ByteReader br(body);

  GridDims dims(d.nx, d.ny, d.nz, Vec3{0, 0, 0}, Vec3{1, 1, 1});  // box carried by the grid, not the delta
  std::size_t mask_bytes = (dims.voxel_count() + 7) / 8;
  std::vector<std::uint8_t> buf(mask_bytes);
  br.get_bytes(buf.data(), buf.size());
  d.mask_next = OccupancyMask::from_packed(dims, buf);
  br.get_bytes(buf.data(), buf.size());
  d.m_remain = OccupancyMask::from_packed(dims, buf);

  std::uint32_t n_add = br.get_u32();
  d.payload_add.resize(static_cast<std::size_t>(n_add) * kVoxelFloats);
  for (auto& h : d.payload_add) h = br.get_u16();
  std::uint32_t n_remain = br.get_u32();
  d.payload_remain.resize(static_cast<std::size_t>(n_remain) * kVoxelFloats);
  for (auto& h : d.payload_remain) h = br.get_u16();
  if (n_remain != d.m_remain.popcount()) throw std::runtime_error("corrupt delta: remain count mismatch");
  return d;
}

// ---------------------------------------------------------------------------
// Size accounting for the reduction pipeline: raw f32 diffs, after the SH
// threshold, after half precision, after DEFLATE.
// ---------------------------------------------------------------------------
struct DeltaStats {
  std::size_t raw_bytes = 0;             // masks + f32 payloads for add + all overlap voxels
  std::size_t post_threshold_bytes = 0;  // masks + f32 payloads for add + gated remain
  std::size_t post_half_bytes = 0;       // masks + f16 payloads + payload counts
  std::size_t post_deflate_bytes = 0;    // actual serialized file size
  std::size_t n_add = 0;
  std::size_t n_remain = 0;
  std::size_t mask_bytes = 0;
};

inline DeltaStats delta_stats(const FrameDelta& d) {
  DeltaStats s;
  s.n_add = d.payload_add.size() / kVoxelFloats;
  s.n_remain = d.payload_remain.size() / kVoxelFloats;
  s.mask_bytes = 2 * ((static_cast<std::size_t>(d.nx) * d.ny * d.nz + 7) / 8);
  // Without the encoder's overlap count (a parsed delta), fall back to the
  // stored remain count; the raw stage then matches post-threshold.
  std::size_t overlap = d.overlap_voxels.value_or(s.n_remain);
  s.raw_bytes = s.mask_bytes + (s.n_add + overlap) * kVoxelFloats * 4;
  s.post_threshold_bytes = s.mask_bytes + (s.n_add + s.n_remain) * kVoxelFloats * 4;
  s.post_half_bytes = s.mask_bytes + (s.n_add + s.n_remain) * kVoxelFloats * 2 + 8;
  s.post_deflate_bytes = serialize_delta(d).size();
  return s;
}

}  // namespace streamgrid
