#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "streamgrid/geometry.hpp"

namespace streamgrid {

constexpr int kShCoeffs = 27;  // 9 degree<=2 basis functions x 3 channels
constexpr int kVoxelFloats = 1 + kShCoeffs;

// Raw opacity is stored unclamped; activation is max(sigma, 0) at sample time.
inline float activate_sigma(float raw) { return raw > 0.f ? raw : 0.f; }

// ---------------------------------------------------------------------------
// GridDims: voxel counts per axis plus the world-space bounding box. Voxels
// are lattice nodes: node (i,j,k) sits at world_min + (i*hx, j*hy, k*hz) with
// h = (world_max - world_min) / (n - 1), so the grid spans the whole box.
// ---------------------------------------------------------------------------
struct GridDims {
  int nx = 0, ny = 0, nz = 0;
  Vec3 world_min{};
  Vec3 world_max{};

  GridDims() = default;
  GridDims(int nx_, int ny_, int nz_, Vec3 wmin, Vec3 wmax)
      : nx(nx_), ny(ny_), nz(nz_), world_min(wmin), world_max(wmax) {
    if (nx < 2 || ny < 2 || nz < 2) throw std::invalid_argument("GridDims: need >= 2 voxels per axis");
    for (int a = 0; a < 3; ++a)
      if (!(world_min[a] < world_max[a])) throw std::invalid_argument("GridDims: world_min must be < world_max");
  }

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
  }
  int count(int axis) const { return axis == 0 ? nx : axis == 1 ? ny : nz; }

  std::size_t linear(int x, int y, int z) const {
    return (static_cast<std::size_t>(x) * ny + y) * nz + z;  // row-major, z fastest
  }
  std::array<int, 3> coord(std::size_t idx) const {
    int z = static_cast<int>(idx % nz);
    std::size_t r = idx / nz;
    int y = static_cast<int>(r % ny);
    int x = static_cast<int>(r / ny);
    return {x, y, z};
  }

  float spacing(int axis) const {
    return (world_max[axis] - world_min[axis]) / static_cast<float>(count(axis) - 1);
  }
  float min_spacing() const {
    float h = spacing(0);
    for (int a = 1; a < 3; ++a) h = h < spacing(a) ? h : spacing(a);
    return h;
  }
  Vec3 node_position(int x, int y, int z) const {
    return {world_min.x + spacing(0) * x, world_min.y + spacing(1) * y, world_min.z + spacing(2) * z};
  }

  bool same_counts(const GridDims& o) const { return nx == o.nx && ny == o.ny && nz == o.nz; }
  bool same_box(const GridDims& o) const {
    for (int a = 0; a < 3; ++a)
      if (world_min[a] != o.world_min[a] || world_max[a] != o.world_max[a]) return false;
    return true;
  }
};

// ---------------------------------------------------------------------------
// OccupancyMask: dense binary volume, one bit per voxel. Bit i of word w is
// linear index 64*w + i; serialization truncates the little-endian word bytes
// to ceil(n/8).
// ---------------------------------------------------------------------------
class OccupancyMask {
 public:
  OccupancyMask() = default;
  explicit OccupancyMask(const GridDims& dims)
      : dims_(dims), words_((dims.voxel_count() + 63) / 64, 0) {}

  const GridDims& dims() const { return dims_; }
  std::size_t size() const { return dims_.voxel_count(); }

  bool get(std::size_t idx) const { return (words_[idx >> 6] >> (idx & 63)) & 1u; }
  void set(std::size_t idx, bool v) {
    std::uint64_t bit = 1ULL << (idx & 63);
    if (v)
      words_[idx >> 6] |= bit;
    else
      words_[idx >> 6] &= ~bit;
  }
  bool get(int x, int y, int z) const { return get(dims_.linear(x, y, z)); }
  void set(int x, int y, int z, bool v) { set(dims_.linear(x, y, z), v); }

  std::size_t popcount() const {
    std::size_t n = 0;
    for (std::uint64_t w : words_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
  }
  bool empty() const {
    for (std::uint64_t w : words_)
      if (w) return false;
    return true;
  }

  // Number of set bits strictly before idx; slot of idx in mask-iteration order.
  std::size_t rank(std::size_t idx) const {
    std::size_t w = idx >> 6, n = 0;
    for (std::size_t i = 0; i < w; ++i) n += static_cast<std::size_t>(std::popcount(words_[i]));
    std::uint64_t mask = (idx & 63) ? ((1ULL << (idx & 63)) - 1) : 0;
    return n + static_cast<std::size_t>(std::popcount(words_[w] & mask));
  }

  template <class Fn>
  void for_each_set(Fn&& fn) const {
    for (std::size_t w = 0; w < words_.size(); ++w) {
      std::uint64_t bits = words_[w];
      while (bits) {
        int b = std::countr_zero(bits);
        fn(static_cast<std::size_t>(w * 64 + b));
        bits &= bits - 1;
      }
    }
  }

  const std::vector<std::uint64_t>& words() const { return words_; }
  std::vector<std::uint64_t>& words() { return words_; }

  // Packed little-endian bytes, ceil(n/8).
  std::vector<std::uint8_t> packed_bytes() const {
    std::size_t nbytes = (size() + 7) / 8;
    std::vector<std::uint8_t> out(nbytes, 0);
    for (std::size_t i = 0; i < nbytes; ++i) out[i] = static_cast<std::uint8_t>(words_[i >> 3] >> ((i & 7) * 8));
    return out;
  }
  static OccupancyMask from_packed(const GridDims& dims, std::span<const std::uint8_t> bytes) {
    OccupancyMask m(dims);
    std::size_t nbytes = (m.size() + 7) / 8;
    if (bytes.size() < nbytes) throw std::runtime_error("packed mask truncated");
    for (std::size_t i = 0; i < nbytes; ++i)
      m.words_[i >> 3] |= static_cast<std::uint64_t>(bytes[i]) << ((i & 7) * 8);
    m.clear_tail();
    return m;
  }

  friend OccupancyMask mask_and(const OccupancyMask& a, const OccupancyMask& b) { return binop(a, b, [](auto x, auto y) { return x & y; }); }
  friend OccupancyMask mask_or(const OccupancyMask& a, const OccupancyMask& b) { return binop(a, b, [](auto x, auto y) { return x | y; }); }
  friend OccupancyMask mask_xor(const OccupancyMask& a, const OccupancyMask& b) { return binop(a, b, [](auto x, auto y) { return x ^ y; }); }
  friend OccupancyMask mask_andnot(const OccupancyMask& a, const OccupancyMask& b) { return binop(a, b, [](auto x, auto y) { return x & ~y; }); }

  bool operator==(const OccupancyMask& o) const { return dims_.same_counts(o.dims_) && words_ == o.words_; }

  void clear_tail() {
    std::size_t n = size();
    if (n & 63) words_.back() &= (1ULL << (n & 63)) - 1;
  }

 private:
  template <class Op>
  static OccupancyMask binop(const OccupancyMask& a, const OccupancyMask& b, Op op) {
    if (!a.dims_.same_counts(b.dims_)) throw std::invalid_argument("mask dims mismatch");
    OccupancyMask out(a.dims_);
    for (std::size_t i = 0; i < out.words_.size(); ++i) out.words_[i] = op(a.words_[i], b.words_[i]);
    out.clear_tail();
    return out;
  }

  GridDims dims_;
  std::vector<std::uint64_t> words_;
};

// ---------------------------------------------------------------------------
// VoxelData: raw opacity plus 27 SH coefficients (9 per channel, channels
// laid out [R0..R8, G0..G8, B0..B8]).
// ---------------------------------------------------------------------------
struct VoxelData {
  float sigma = 0.f;
  std::array<float, kShCoeffs> sh{};

  bool operator==(const VoxelData&) const = default;
};

// ---------------------------------------------------------------------------
// SparseGrid: occupancy mask plus per-occupied-voxel data in mask-iteration
// order (ascending linear index). A per-word rank table gives O(1)
// coord -> slot lookups.
// ---------------------------------------------------------------------------
class SparseGrid {
 public:
  SparseGrid() = default;
  explicit SparseGrid(const GridDims& dims) : dims_(dims), mask_(dims) {}
  SparseGrid(const GridDims& dims, OccupancyMask mask, std::vector<VoxelData> voxels)
      : dims_(dims), mask_(std::move(mask)), voxels_(std::move(voxels)) {
    if (voxels_.size() != mask_.popcount()) throw std::invalid_argument("voxel count != mask popcount");
    rebuild_rank();
  }

  const GridDims& dims() const { return dims_; }
  const OccupancyMask& mask() const { return mask_; }
  std::size_t voxel_count() const { return voxels_.size(); }
  const std::vector<VoxelData>& voxels() const { return voxels_; }
  std::vector<VoxelData>& voxels() { return voxels_; }

  bool occupied(std::size_t idx) const { return mask_.get(idx); }
  bool occupied(int x, int y, int z) const { return mask_.get(x, y, z); }

  // Storage slot of an occupied voxel; -1 if unoccupied.
  std::ptrdiff_t slot(std::size_t idx) const {
    if (!mask_.get(idx)) return -1;
    std::size_t w = idx >> 6;
    std::uint64_t below = (idx & 63) ? (mask_.words()[w] & ((1ULL << (idx & 63)) - 1)) : 0;
    return static_cast<std::ptrdiff_t>(rank_[w] + static_cast<std::size_t>(std::popcount(below)));
  }
  std::ptrdiff_t slot(int x, int y, int z) const { return slot(dims_.linear(x, y, z)); }

  const VoxelData& voxel_at(std::size_t idx) const { return voxels_[static_cast<std::size_t>(slot(idx))]; }
  VoxelData& voxel_at(std::size_t idx) { return voxels_[static_cast<std::size_t>(slot(idx))]; }

  // Replaces occupancy. Voxels occupied in both keep their values; newly
  // occupied voxels get `fill`.
  void reset_occupancy(const OccupancyMask& new_mask, const VoxelData& fill = {}) {
    if (!new_mask.dims().same_counts(dims_)) throw std::invalid_argument("mask dims mismatch");
    std::vector<VoxelData> nv;
    nv.reserve(new_mask.popcount());
    new_mask.for_each_set([&](std::size_t idx) {
      std::ptrdiff_t s = slot(idx);
      nv.push_back(s >= 0 ? voxels_[static_cast<std::size_t>(s)] : fill);
    });
    mask_ = new_mask;
    voxels_ = std::move(nv);
    rebuild_rank();
  }

  void rebuild_rank() {
    rank_.resize(mask_.words().size() + 1);
    std::size_t acc = 0;
    for (std::size_t i = 0; i < mask_.words().size(); ++i) {
      rank_[i] = acc;
      acc += static_cast<std::size_t>(std::popcount(mask_.words()[i]));
    }
    rank_.back() = acc;
  }

  bool operator==(const SparseGrid& o) const {
    return dims_.same_counts(o.dims_) && mask_ == o.mask_ && voxels_ == o.voxels_;
  }

 private:
  GridDims dims_;
  OccupancyMask mask_;
  std::vector<VoxelData> voxels_;
  std::vector<std::size_t> rank_;
};

// ---------------------------------------------------------------------------
// Trilinear sampling stencil. Weights are computed in Real so the trainer can
// instantiate the whole differentiable path in double.
// ---------------------------------------------------------------------------
template <class Real>
struct Stencil {
  std::array<std::ptrdiff_t, 8> slots;  // -1 for unoccupied corners
  std::array<Real, 8> weights;
  bool any_occupied = false;
};

// Corner order: bit 0 -> +x, bit 1 -> +y, bit 2 -> +z offset.
template <class Real>
inline Stencil<Real> gather_stencil(const SparseGrid& grid, Vec3 x) {
  const GridDims& d = grid.dims();
  Real u[3];
  int i0[3];
  Real f[3];
  for (int a = 0; a < 3; ++a) {
    Real lo = static_cast<Real>(d.world_min[a]);
    Real hi = static_cast<Real>(d.world_max[a]);
    Real span = hi - lo;
    Real ua = (static_cast<Real>(x[a]) - lo) / span * static_cast<Real>(d.count(a) - 1);
    Real tol = static_cast<Real>(1e-4) * static_cast<Real>(d.count(a) - 1);
    if (ua < -tol || ua > static_cast<Real>(d.count(a) - 1) + tol)
      throw std::domain_error("sample position outside grid bounding box");
    ua = std::clamp(ua, Real(0), static_cast<Real>(d.count(a) - 1));
    u[a] = ua;
    int i = static_cast<int>(ua);
    if (i > d.count(a) - 2) i = d.count(a) - 2;
    i0[a] = i;
    f[a] = std::clamp(ua - static_cast<Real>(i), Real(0), Real(1));
  }
  Stencil<Real> st;
  for (int c = 0; c < 8; ++c) {
    int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
    Real w = (dx ? f[0] : Real(1) - f[0]) * (dy ? f[1] : Real(1) - f[1]) * (dz ? f[2] : Real(1) - f[2]);
    std::ptrdiff_t s = grid.slot(i0[0] + dx, i0[1] + dy, i0[2] + dz);
    st.slots[c] = s;
    st.weights[c] = w;
    if (s >= 0) st.any_occupied = true;
  }
  return st;
}

// Trilinear blend of raw opacity and SH coefficients at world position x.
// Unoccupied corners contribute zeros. Throws std::domain_error outside the box.
inline std::pair<float, std::array<float, kShCoeffs>> sample_trilinear(const SparseGrid& grid, Vec3 x) {
  Stencil<float> st = gather_stencil<float>(grid, x);
  float sigma = 0.f;
  std::array<float, kShCoeffs> sh{};
  for (int c = 0; c < 8; ++c) {
    if (st.slots[c] < 0) continue;
    const VoxelData& v = grid.voxels()[static_cast<std::size_t>(st.slots[c])];
    float w = st.weights[c];
    sigma += w * v.sigma;
    for (int k = 0; k < kShCoeffs; ++k) sh[k] += w * v.sh[k];
  }
  return {sigma, sh};
}

// Removes voxels whose activated opacity is <= threshold (strict > survives).
inline SparseGrid prune(const SparseGrid& grid, float sigma_threshold) {
  if (sigma_threshold < 0.f) throw std::invalid_argument("prune: threshold must be >= 0");
  OccupancyMask keep(grid.dims());
  std::vector<VoxelData> voxels;
  grid.mask().for_each_set([&](std::size_t idx) {
    const VoxelData& v = grid.voxel_at(idx);
    if (activate_sigma(v.sigma) > sigma_threshold) {
      keep.set(idx, true);
      voxels.push_back(v);
    }
  });
  return SparseGrid(grid.dims(), std::move(keep), std::move(voxels));
}

// Doubles the resolution. Each output node takes the trilinear interpolation
// of the source grid at the output node's world position; output occupancy is
// the union of the contributing source stencil corners.
inline SparseGrid upsample(const SparseGrid& grid) {
  const GridDims& s = grid.dims();
  GridDims d(s.nx * 2, s.ny * 2, s.nz * 2, s.world_min, s.world_max);
  OccupancyMask mask(d);
  std::vector<VoxelData> voxels;
  for (int x = 0; x < d.nx; ++x)
    for (int y = 0; y < d.ny; ++y)
      for (int z = 0; z < d.nz; ++z) {
        Vec3 p = d.node_position(x, y, z);
        Stencil<float> st = gather_stencil<float>(grid, p);
        if (!st.any_occupied) continue;
        VoxelData v;
        for (int c = 0; c < 8; ++c) {
          if (st.slots[c] < 0) continue;
          const VoxelData& src = grid.voxels()[static_cast<std::size_t>(st.slots[c])];
          v.sigma += st.weights[c] * src.sigma;
          for (int k = 0; k < kShCoeffs; ++k) v.sh[k] += st.weights[c] * src.sh[k];
        }
        mask.set(x, y, z, true);
        voxels.push_back(v);
      }
  return SparseGrid(d, std::move(mask), std::move(voxels));
}

// Halves the resolution (ceil per axis). Each output voxel is the mean of its
// occupied 2x2x2 children; odd borders replicate the last slice, so the
// clamped duplicate children participate in the mean. Output occupied iff at
// least one child is occupied.
inline SparseGrid downsample(const SparseGrid& grid) {
  const GridDims& s = grid.dims();
  GridDims d((s.nx + 1) / 2, (s.ny + 1) / 2, (s.nz + 1) / 2, s.world_min, s.world_max);
  OccupancyMask mask(d);
  std::vector<VoxelData> voxels;
  for (int x = 0; x < d.nx; ++x)
    for (int y = 0; y < d.ny; ++y)
      for (int z = 0; z < d.nz; ++z) {
        VoxelData acc;
        int n = 0;
        for (int c = 0; c < 8; ++c) {
          int cx = std::min(2 * x + (c & 1), s.nx - 1);
          int cy = std::min(2 * y + ((c >> 1) & 1), s.ny - 1);
          int cz = std::min(2 * z + ((c >> 2) & 1), s.nz - 1);
          std::ptrdiff_t sl = grid.slot(cx, cy, cz);
          if (sl < 0) continue;
          const VoxelData& v = grid.voxels()[static_cast<std::size_t>(sl)];
          acc.sigma += v.sigma;
          for (int k = 0; k < kShCoeffs; ++k) acc.sh[k] += v.sh[k];
          ++n;
        }
        if (n == 0) continue;
        acc.sigma /= static_cast<float>(n);
        for (int k = 0; k < kShCoeffs; ++k) acc.sh[k] /= static_cast<float>(n);
        mask.set(x, y, z, true);
        voxels.push_back(acc);
      }
  return SparseGrid(d, std::move(mask), std::move(voxels));
}

}  // namespace streamgrid
