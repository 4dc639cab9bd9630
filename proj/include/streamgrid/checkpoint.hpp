#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "streamgrid/common.hpp"
#include "streamgrid/delta.hpp"
#include "streamgrid/grid.hpp"

namespace streamgrid {

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  f.seekg(0, std::ios::end);
  std::streamoff n = f.tellg();
  f.seekg(0);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(n));
  f.read(reinterpret_cast<char*>(out.data()), n);
  if (!f) throw std::runtime_error("short read: " + path);
  return out;
}

inline void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("short write: " + path);
}

// ---------------------------------------------------------------------------
// Full-grid checkpoint: magic "SGRD", u32 version=1, then a DEFLATE-compressed
// payload of [3x u32 dims][6x f32 bbox][packed mask][28x f32 per occupied
// voxel, sigma first], all little-endian.
// ---------------------------------------------------------------------------
inline constexpr char kGridMagic[4] = {'S', 'G', 'R', 'D'};

inline std::vector<std::uint8_t> serialize_grid(const SparseGrid& grid) {
  ByteWriter payload;
  const GridDims& d = grid.dims();
  payload.put_u32(static_cast<std::uint32_t>(d.nx));
  payload.put_u32(static_cast<std::uint32_t>(d.ny));
  payload.put_u32(static_cast<std::uint32_t>(d.nz));
  for (int a = 0; a < 3; ++a) payload.put_f32(d.world_min[a]);
  for (int a = 0; a < 3; ++a) payload.put_f32(d.world_max[a]);
  auto packed = grid.mask().packed_bytes();
  payload.put_bytes(packed.data(), packed.size());
  for (const VoxelData& v : grid.voxels()) {
    payload.put_f32(v.sigma);
    for (int k = 0; k < kShCoeffs; ++k) payload.put_f32(v.sh[k]);
  }

  ByteWriter out;
  out.put_magic(kGridMagic);
  out.put_u32(1);
  auto compressed = zlib_compress(payload.bytes());
  out.put_bytes(compressed.data(), compressed.size());
  return out.take();
}

inline SparseGrid parse_grid(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (!r.expect_magic(kGridMagic)) throw std::runtime_error("bad magic: not a grid checkpoint");
  std::uint32_t version = r.get_u32();
  if (version != 1) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  std::vector<std::uint8_t> comp(r.remaining());
  r.get_bytes(comp.data(), comp.size());
  std::vector<std::uint8_t> payload = zlib_decompress(comp);
  ByteReader pr(payload);

  int nx = static_cast<int>(pr.get_u32());
  int ny = static_cast<int>(pr.get_u32());
  int nz = static_cast<int>(pr.get_u32());
  Vec3 wmin, wmax;
  for (int a = 0; a < 3; ++a) wmin[a] = pr.get_f32();
  for (int a = 0; a < 3; ++a) wmax[a] = pr.get_f32();
  GridDims dims(nx, ny, nz, wmin, wmax);

  std::size_t mask_bytes = (dims.voxel_count() + 7) / 8;
  std::vector<std::uint8_t> buf(mask_bytes);
  pr.get_bytes(buf.data(), buf.size());
  OccupancyMask mask = OccupancyMask::from_packed(dims, buf);

  std::vector<VoxelData> voxels(mask.popcount());
  for (VoxelData& v : voxels) {
    v.sigma = pr.get_f32();
    for (int k = 0; k < kShCoeffs; ++k) v.sh[k] = pr.get_f32();
  }
  return SparseGrid(dims, std::move(mask), std::move(voxels));
}

inline void save_grid(const std::string& path, const SparseGrid& grid) {
  write_file_bytes(path, serialize_grid(grid));
}
inline SparseGrid load_grid(const std::string& path) { return parse_grid(read_file_bytes(path)); }

inline void save_delta(const std::string& path, const FrameDelta& d) {
  write_file_bytes(path, serialize_delta(d));
}
inline FrameDelta load_delta(const std::string& path) { return parse_delta(read_file_bytes(path)); }

// ---------------------------------------------------------------------------
// Checkpoint directory: base.sgrd + delta_0001.sdlt ... + manifest.txt.
// ---------------------------------------------------------------------------
inline std::string delta_filename(int frame) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "delta_%04d.sdlt", frame);
  return buf;
}

struct Manifest {
  int nx = 0, ny = 0, nz = 0;
  float epsilon = 0.f;
  int rho_d = 0, rho_e = 0;
  int frames = 0;  // number of streamed frames (deltas); frame 0 is the base
};

inline void save_manifest(const std::string& path, const Manifest& m) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write manifest: " + path);
  f << "dims=" << m.nx << " " << m.ny << " " << m.nz << "\n";
  f << "epsilon=" << m.epsilon << "\n";
  f << "rho_d=" << m.rho_d << "\n";
  f << "rho_e=" << m.rho_e << "\n";
  f << "frames=" << m.frames << "\n";
}

inline Manifest load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open manifest: " + path);
  Manifest m;
  std::string line;
  while (std::getline(f, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    std::istringstream val(line.substr(eq + 1));
    if (key == "dims")
      val >> m.nx >> m.ny >> m.nz;
    else if (key == "epsilon")
      val >> m.epsilon;
    else if (key == "rho_d")
      val >> m.rho_d;
    else if (key == "rho_e")
      val >> m.rho_e;
    else if (key == "frames")
      val >> m.frames;
  }
  return m;
}

}  // namespace streamgrid
