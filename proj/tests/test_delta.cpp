#include <catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "streamgrid/delta.hpp"

using namespace streamgrid;

namespace {
GridDims cube(int n) { return GridDims(n, n, n, Vec3{0, 0, 0}, Vec3{1, 1, 1}); }

// Random structural + value edits, the kind a tuning step produces.
SparseGrid mutate_grid(Rng& rng, const SparseGrid& g) {
  const GridDims& d = g.dims();
  OccupancyMask mask = g.mask();
  for (std::size_t i = 0; i < d.voxel_count(); ++i) {
    if (rng.coin(0.05)) mask.set(i, !mask.get(i));
  }
  std::vector<VoxelData> voxels;
  mask.for_each_set([&](std::size_t idx) {
    VoxelData v;
    if (g.occupied(idx)) {
      v = g.voxel_at(idx);
      if (rng.coin(0.5)) {
        v.sigma += rng.uniform_f(-0.5f, 0.5f);
        for (int k = 0; k < kShCoeffs; ++k) v.sh[k] += rng.uniform_f(-0.2f, 0.2f);
      }
    } else {
      v.sigma = rng.uniform_f(0.f, 3.f);
      for (int k = 0; k < kShCoeffs; ++k) v.sh[k] = rng.uniform_f(-1.f, 1.f);
    }
    voxels.push_back(v);
  });
  return SparseGrid(d, std::move(mask), std::move(voxels));
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}
}  // namespace

TEST_CASE("half precision conversion round-trips every finite half pattern", "[delta]") {
  for (std::uint32_t h = 0; h <= 0xFFFF; ++h) {
    std::uint16_t hh = static_cast<std::uint16_t>(h);
    bool is_nan = ((hh >> 10) & 0x1F) == 0x1F && (hh & 0x3FF) != 0;
    if (is_nan) continue;
    CHECK(float_to_half(half_to_float(hh)) == hh);
  }
  // known encodings and round-to-nearest-even
  CHECK(float_to_half(1.0f) == 0x3C00);
  CHECK(float_to_half(0.5f) == 0x3800);
  CHECK(float_to_half(65504.f) == 0x7BFF);
  CHECK(float_to_half(65520.f) == 0x7C00);                 // rounds to +inf
  CHECK(float_to_half(1.0f + 0.00048828125f) == 0x3C00);   // 1 + 2^-11 ties to even
  CHECK(float_to_half(1.0f + 3 * 0.00048828125f) == 0x3C02);
  CHECK(half_to_float(0x0001) == Catch::Approx(5.9604644775390625e-08));
  CHECK(float_to_half(-0.f) == 0x8000);
}

TEST_CASE("compute_masks boolean algebra and the strict epsilon gate", "[delta]") {
  GridDims d = cube(2);

  // prev [1,1,0], next [1,0,1] over the first three linear indices
  OccupancyMask prev(d), next(d);
  prev.set(std::size_t{0}, true);
  prev.set(std::size_t{1}, true);
  next.set(std::size_t{0}, true);
  next.set(std::size_t{2}, true);
  std::vector<float> l1 = {0.f};  // one overlap voxel (index 0)
  DiffMasks m = compute_masks(prev, next, l1, 0.f);
  CHECK(m.m_add.popcount() == 1);
  CHECK(m.m_add.get(std::size_t{2}));
  CHECK(m.m_erase.popcount() == 1);
  CHECK(m.m_erase.get(std::size_t{1}));
  CHECK(m.m_remain.empty());  // L1 == 0 is not > 0

  // identical grids -> all masks empty
  Rng rng(3);
  SparseGrid g = oracles::random_grid(rng, cube(8), 0.4);
  DiffMasks same = compute_masks(g, g, 0.f, 0.f);
  CHECK(same.m_add.empty());
  CHECK(same.m_erase.empty());
  CHECK(same.m_remain.empty());

  // L1 exactly epsilon is excluded (strict >)
  SparseGrid a = oracles::random_grid(rng, cube(2), 1.0);
  SparseGrid b = a;
  b.voxels()[0].sh[0] = a.voxels()[0].sh[0] + 0.25f;  // L1 = 0.25 exactly
  b.voxels()[1].sh[0] = a.voxels()[1].sh[0] + 0.5f;   // L1 = 0.5
  DiffMasks gate = compute_masks(a, b, 0.25f, /*sigma_eps=*/1e9f);
  CHECK(!gate.m_remain.get(std::size_t{0}));
  CHECK(gate.m_remain.get(std::size_t{1}));
}

TEST_CASE("diff masks are pairwise disjoint for random pairs", "[delta]") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    SparseGrid a = oracles::random_grid(rng, cube(8), 0.4);
    SparseGrid b = mutate_grid(rng, a);
    DiffMasks m = compute_masks(a, b, 0.1f, 1e-3f);
    CHECK(mask_and(m.m_add, m.m_erase).empty());
    CHECK(mask_and(m.m_add, m.m_remain).empty());
    CHECK(mask_and(m.m_erase, m.m_remain).empty());
  }
}

TEST_CASE("sigma-only changes survive via the sigma gate", "[delta]") {
  Rng rng(11);
  SparseGrid a = oracles::random_grid(rng, cube(4), 1.0);
  SparseGrid b = a;
  b.voxels()[5].sigma += 0.5f;  // sh untouched
  DiffMasks no_gate = compute_masks(a, b, 0.01f, /*sigma_eps=*/1e9f);
  CHECK(no_gate.m_remain.empty());  // SH gate alone drops it
  DiffMasks with_gate = compute_masks(a, b, 0.01f, 1e-3f);
  CHECK(with_gate.m_remain.popcount() == 1);

  // and the end-to-end apply keeps the opacity change
  FrameDelta delta = encode_delta(a, b, 0.01f, 1e-3f);
  SparseGrid back = apply_delta(a, delta);
  CHECK(back.voxels()[5].sigma == Catch::Approx(b.voxels()[5].sigma).margin(1e-3));
}

TEST_CASE("encode/apply identity and single-voxel add", "[delta]") {
  Rng rng(13);
  SparseGrid g = oracles::random_grid(rng, cube(8), 0.4);

  FrameDelta empty = encode_delta(g, g, 0.01f);
  CHECK(empty.payload_add.empty());
  CHECK(empty.payload_remain.empty());
  SparseGrid same = apply_delta(g, empty);
  CHECK(same == g);  // bit-identical

  // one voxel added -> payload_add holds exactly that voxel's 28 values
  SparseGrid h = g;
  OccupancyMask m2 = g.mask();
  std::size_t free_idx = 0;
  for (std::size_t i = 0; i < g.dims().voxel_count(); ++i)
    if (!m2.get(i)) {
      free_idx = i;
      break;
    }
  m2.set(free_idx, true);
  h.reset_occupancy(m2, VoxelData{});
  h.voxel_at(free_idx).sigma = 2.5f;
  h.voxel_at(free_idx).sh[3] = -1.f;
  FrameDelta one = encode_delta(g, h, 0.01f);
  CHECK(one.payload_add.size() == 28);
  CHECK(half_to_float(one.payload_add[0]) == Catch::Approx(2.5));
}

TEST_CASE("delta roundtrip: exact occupancy, half-precision payloads, sub-epsilon freeze", "[delta]") {
  Rng rng(17);
  const float eps = 0.3f, sig_eps = 1e-3f;
  for (int trial = 0; trial < 20; ++trial) {
    SparseGrid a = oracles::random_grid(rng, cube(16), 0.3);
    SparseGrid b = mutate_grid(rng, a);
    FrameDelta d = parse_delta(serialize_delta(encode_delta(a, b, eps, sig_eps)));
    SparseGrid back = apply_delta(a, d);

    REQUIRE(back.mask() == b.mask());
    DiffMasks masks = compute_masks(a, b, eps, sig_eps);
    b.mask().for_each_set([&](std::size_t idx) {
      const VoxelData& want = b.voxel_at(idx);
      const VoxelData& got = back.voxel_at(idx);
      if (masks.m_add.get(idx)) {
        // quantized absolute values
        REQUIRE(got.sigma == Catch::Approx(want.sigma).margin(std::abs(want.sigma) * 1e-3 + 1e-6));
        for (int k = 0; k < kShCoeffs; ++k)
          REQUIRE(got.sh[k] == Catch::Approx(want.sh[k]).margin(std::abs(want.sh[k]) * 1e-3 + 1e-6));
      } else if (masks.m_remain.get(idx)) {
        const VoxelData& base = a.voxel_at(idx);
        REQUIRE(got.sigma ==
                Catch::Approx(want.sigma).margin(std::abs(want.sigma - base.sigma) * 1e-3 + 2e-6));
        for (int k = 0; k < kShCoeffs; ++k)
          REQUIRE(got.sh[k] ==
                  Catch::Approx(want.sh[k]).margin(std::abs(want.sh[k] - base.sh[k]) * 1e-3 + 2e-6));
      } else {
        // below both gates: exactly the previous values
        REQUIRE(got == a.voxel_at(idx));
      }
    });
  }
}

TEST_CASE("delta application chain equals replaying from the base", "[delta]") {
  Rng rng(19);
  SparseGrid base = oracles::random_grid(rng, cube(8), 0.4);
  std::vector<FrameDelta> deltas;
  std::vector<SparseGrid> snapshots;
  SparseGrid live = base;
  for (int j = 1; j <= 10; ++j) {
    SparseGrid target = mutate_grid(rng, live);
    FrameDelta d = encode_delta(live, target, 0.05f, 1e-3f, j);
    live = apply_delta(live, d);
    deltas.push_back(std::move(d));
    snapshots.push_back(live);
  }
  SparseGrid replayed = base;
  for (std::size_t j = 0; j < deltas.size(); ++j) {
    replayed = apply_delta(replayed, deltas[j]);
    REQUIRE(replayed == snapshots[j]);  // bit-identical at every prefix
  }
}

TEST_CASE("encode is deterministic and the body layout is frozen", "[delta]") {
  Rng rng(23);
  SparseGrid a = oracles::random_grid(rng, cube(8), 0.4);
  SparseGrid b = mutate_grid(rng, a);
  auto bytes1 = serialize_delta(encode_delta(a, b, 0.1f, 1e-3f, 4));
  auto bytes2 = serialize_delta(encode_delta(a, b, 0.1f, 1e-3f, 4));
  CHECK(bytes1 == bytes2);

  // golden: fixed input -> frozen uncompressed body hash (zlib-version-proof)
  GridDims d = cube(4);
  OccupancyMask m0(d), m1(d);
  std::vector<VoxelData> v0, v1;
  for (std::size_t i = 0; i < d.voxel_count(); i += 3) {
    m0.set(i, true);
    VoxelData v;
    v.sigma = static_cast<float>(i) * 0.25f;
    v.sh[0] = 1.f;
    v0.push_back(v);
  }
  for (std::size_t i = 0; i < d.voxel_count(); i += 4) {
    m1.set(i, true);
    VoxelData v;
    v.sigma = static_cast<float>(i) * 0.5f;
    v.sh[1] = -2.f;
    v1.push_back(v);
  }
  SparseGrid ga(d, m0, v0), gb(d, m1, v1);
  FrameDelta delta = encode_delta(ga, gb, 0.25f, 1e-3f, 7);
  auto file = serialize_delta(delta);
  // header is plain bytes; body is DEFLATE -- hash the decompressed body
  auto body = zlib_decompress(std::span<const std::uint8_t>(file).subspan(24));
  std::uint64_t h = fnv1a(body);
  INFO("body hash: 0x" << std::hex << h);
  CHECK(h == 0x23e88e1a39feb99cULL);
}

TEST_CASE("larger epsilon never increases the encoded size", "[delta]") {
  Rng rng(29);
  SparseGrid a = oracles::random_grid(rng, cube(12), 0.35);
  SparseGrid b = mutate_grid(rng, a);
  std::size_t prev = SIZE_MAX;
  for (float eps : {0.f, 0.05f, 0.2f, 1.f, 10.f}) {
    std::size_t sz = serialize_delta(encode_delta(a, b, eps, 1e-3f)).size();
    CHECK(sz <= prev);
    prev = sz;
  }
}

TEST_CASE("apply_delta validates dims and payload lengths", "[delta]") {
  Rng rng(31);
  SparseGrid a = oracles::random_grid(rng, cube(8), 0.4);
  SparseGrid b = mutate_grid(rng, a);
  FrameDelta d = encode_delta(a, b, 0.1f);

  SparseGrid wrong = oracles::random_grid(rng, cube(4), 0.4);
  CHECK_THROWS_AS(apply_delta(wrong, d), std::invalid_argument);

  FrameDelta corrupt = d;
  corrupt.payload_add.resize(corrupt.payload_add.size() + 28);
  CHECK_THROWS_AS(apply_delta(a, corrupt), std::runtime_error);

  CHECK_THROWS_AS(encode_delta(a, wrong, 0.1f), std::invalid_argument);
}

TEST_CASE("delta_stats stages and the empty-delta compression ratio", "[delta]") {
  // empty 64-cube delta: compressed size is far below 1% of the raw mask bytes
  GridDims d = cube(64);
  SparseGrid empty(d);
  FrameDelta nothing = encode_delta(empty, empty, 0.01f);
  DeltaStats s = delta_stats(nothing);
  CHECK(s.mask_bytes == 2u * (d.voxel_count() / 8));
  CHECK(static_cast<double>(s.post_deflate_bytes) < 0.01 * static_cast<double>(s.mask_bytes));

  // half-precision stage halves the payload bytes
  Rng rng(37);
  SparseGrid a = oracles::random_grid(rng, cube(8), 0.4);
  SparseGrid b = mutate_grid(rng, a);
  FrameDelta delta = encode_delta(a, b, 0.05f);
  DeltaStats st = delta_stats(delta);
  std::size_t payload32 = st.post_threshold_bytes - st.mask_bytes;
  std::size_t payload16 = st.post_half_bytes - st.mask_bytes - 8;
  CHECK(payload16 * 2 == payload32);
  CHECK(st.raw_bytes >= st.post_threshold_bytes);
  CHECK(st.post_deflate_bytes == serialize_delta(delta).size());
}

TEST_CASE("parse_delta rejects corrupt containers", "[delta]") {
  Rng rng(41);
  SparseGrid a = oracles::random_grid(rng, cube(4), 0.5);
  auto bytes = serialize_delta(encode_delta(a, a, 0.f));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_WITH(parse_delta(bad_magic), Catch::Matchers::ContainsSubstring("bad magic"));
  auto truncated = bytes;
  truncated.resize(truncated.size() / 2);
  CHECK_THROWS(parse_delta(truncated));
}
