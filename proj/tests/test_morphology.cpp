#include <catch_amalgamated.hpp>

#include "oracles.hpp"
#include "streamgrid/morphology.hpp"

using namespace streamgrid;

namespace {
GridDims cube(int n) { return GridDims(n, n, n, Vec3{0, 0, 0}, Vec3{1, 1, 1}); }
}

TEST_CASE("dilate basics", "[morphology]") {
  GridDims d = cube(8);
  OccupancyMask m(d);
  m.set(4, 4, 4, true);

  CHECK(dilate(m, 0) == m);

  OccupancyMask d1 = dilate(m, 1);
  CHECK(d1.popcount() == 27);
  for (int x = 3; x <= 5; ++x)
    for (int y = 3; y <= 5; ++y)
      for (int z = 3; z <= 5; ++z) CHECK(d1.get(x, y, z));

  // border clipping
  OccupancyMask corner(d);
  corner.set(0, 0, 0, true);
  CHECK(dilate(corner, 1).popcount() == 8);

  // all-set stays all-set
  OccupancyMask full(d);
  for (std::size_t i = 0; i < d.voxel_count(); ++i) full.set(i, true);
  CHECK(dilate(full, 2) == full);
}

TEST_CASE("erode basics", "[morphology]") {
  GridDims d = cube(8);
  OccupancyMask m(d);
  m.set(4, 4, 4, true);
  CHECK(erode(m, 0) == m);
  CHECK(erode(m, 1).empty());  // isolated voxel erodes away

  // out-of-bounds counts as unset: a full mask erodes its border away
  OccupancyMask full(d);
  for (std::size_t i = 0; i < d.voxel_count(); ++i) full.set(i, true);
  OccupancyMask e1 = erode(full, 1);
  CHECK(e1.popcount() == 6u * 6u * 6u);
}

TEST_CASE("morphology agrees with the naive reference on random masks", "[morphology]") {
  Rng rng(41);
  for (int trial = 0; trial < 12; ++trial) {
    GridDims d = cube(16);
    OccupancyMask m = oracles::random_mask(rng, d, rng.uniform(0.05, 0.5));
    int r = static_cast<int>(rng.below(4));
    CHECK(dilate(m, r) == oracles::naive_dilate(m, r));
    CHECK(erode(m, r) == oracles::naive_erode(m, r));
    OccupancyMask band = compute_band(m, r, r);
    CHECK(band == mask_xor(oracles::naive_dilate(m, r), oracles::naive_erode(m, r)));
  }
}

TEST_CASE("closing contains the original mask", "[morphology]") {
  Rng rng(43);
  for (int trial = 0; trial < 8; ++trial) {
    OccupancyMask m = oracles::random_mask(rng, cube(16), 0.2);
    int r = 1 + static_cast<int>(rng.below(3));
    OccupancyMask closed = erode(dilate(m, r), r);
    // closed superset of m: m & ~closed must be empty
    CHECK(mask_andnot(m, closed).empty());
  }
}

TEST_CASE("compute_band examples", "[morphology]") {
  GridDims d = cube(11);

  OccupancyMask empty(d);
  CHECK(compute_band(empty, 2, 2).empty());

  // single set bit, radii 1: the band is the full 3x3x3 dilation cube
  OccupancyMask single(d);
  single.set(5, 5, 5, true);
  OccupancyMask band = compute_band(single, 1, 1);
  CHECK(band == dilate(single, 1));
  CHECK(band.popcount() == 27);

  // solid 5^3 cube, radii 1: hollow shell 7^3 minus 3^3
  OccupancyMask solid(d);
  for (int x = 3; x <= 7; ++x)
    for (int y = 3; y <= 7; ++y)
      for (int z = 3; z <= 7; ++z) solid.set(x, y, z, true);
  OccupancyMask shell = compute_band(solid, 1, 1);
  CHECK(shell.popcount() == 7u * 7u * 7u - 3u * 3u * 3u);
  CHECK(!shell.get(5, 5, 5));
  CHECK(shell.get(2, 2, 2));
}

TEST_CASE("band is disjoint from the eroded core and inside the dilation", "[morphology]") {
  Rng rng(47);
  for (int trial = 0; trial < 8; ++trial) {
    OccupancyMask m = oracles::random_mask(rng, cube(12), 0.3);
    int r = static_cast<int>(rng.below(3));
    OccupancyMask band = compute_band(m, r, r);
    CHECK(mask_and(band, erode(m, r)).empty());
    CHECK(mask_andnot(band, dilate(m, r)).empty());
  }
}

TEST_CASE("activate_band restores zero voxels and reports the trainable set", "[morphology]") {
  Rng rng(53);
  GridDims d = cube(8);

  // band entirely inside existing occupancy: grid unchanged
  {
    SparseGrid g = oracles::random_grid(rng, d, 1.0);
    SparseGrid before = g;
    OccupancyMask band(d);
    band.set(2, 2, 2, true);
    TrainableSet t = activate_band(g, band);
    CHECK(g == before);
    CHECK(t.mask == band);
  }

  // band disjoint from occupancy: grid gains |band| zero voxels
  {
    OccupancyMask occ(d);
    occ.set(0, 0, 0, true);
    VoxelData v;
    v.sigma = 2.f;
    SparseGrid g(d, occ, {v});
    OccupancyMask band(d);
    band.set(5, 5, 5, true);
    band.set(6, 6, 6, true);
    activate_band(g, band);
    CHECK(g.voxel_count() == 3);
    CHECK(g.voxel_at(d.linear(5, 5, 5)).sigma == 0.f);
    CHECK(g.voxel_at(d.linear(0, 0, 0)).sigma == 2.f);
  }

  // mixed random instances: occupancy' == occupancy | band, values preserved
  for (int trial = 0; trial < 6; ++trial) {
    SparseGrid g = oracles::random_grid(rng, d, 0.4);
    SparseGrid before = g;
    OccupancyMask band = oracles::random_mask(rng, d, 0.3);
    activate_band(g, band);
    CHECK(g.mask() == mask_or(before.mask(), band));
    CHECK(g.voxel_count() >= before.voxel_count());
    before.mask().for_each_set([&](std::size_t idx) {
      REQUIRE(g.voxel_at(idx) == before.voxel_at(idx));
    });
  }
}
