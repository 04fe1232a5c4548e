#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <set>
#include <sstream>

#include "gluevol/voxel/grid.hpp"

using namespace gluevol;
using namespace gluevol::voxel;

namespace {

/// Occupied cells by the documented rule, computed independently.
std::set<std::size_t> oracle_cells(const geom::PointCloud& c, const VoxelGrid& g) {
  std::set<std::size_t> cells;
  for (const auto& p : c.points) {
    const auto clamp_top = [](double t, int n) { return std::min(static_cast<int>(std::floor(t)), n - 1); };
    const int i = clamp_top((p.x - g.origin.x) / g.dx, g.nx);
    const int j = clamp_top((p.y - g.origin.y) / g.dy, g.ny);
    if (p.z > g.nz * g.dz) continue;
    const int k = p.z < 0.0 ? 0 : clamp_top(p.z / g.dz, g.nz);
    cells.insert(g.linear(i, j, k));
  }
  return cells;
}

double fraction_at_or_below(const geom::PointCloud& c, double top) {
  std::size_t n = 0;
  for (const auto& p : c.points) n += p.z <= top;
  return static_cast<double>(n) / static_cast<double>(c.size());
}

geom::PointCloud random_cloud(std::mt19937_64& gen) {
  std::uniform_int_distribution<int> count(1, 1500), kind(0, 3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = count(gen);
  const int k = kind(gen);
  const double w = 0.2 + 2.0 * u(gen), h = 0.2 + 2.0 * u(gen), zmax = 0.01 + 1.5 * u(gen);
  std::exponential_distribution<double> ex(1.0 / (0.1 * zmax));
  std::normal_distribution<double> noise(0.0, 0.01);
  geom::PointCloud c;
  for (int i = 0; i < n; ++i) {
    double z = 0.0;
    switch (k) {
      case 0: z = zmax * u(gen); break;
      case 1: z = ex(gen); break;                  // long tail
      case 2: z = noise(gen); break;               // substrate only, some below zero
      case 3: z = u(gen) < 0.03 ? 5.0 * zmax : zmax * u(gen) * u(gen); break;  // outliers
    }
    c.points.push_back({w * u(gen), h * u(gen), z});
  }
  return c;
}

}  // namespace

TEST(Voxel, CanonicalDims) {
  geom::PointCloud c;
  c.points = {{0, 0, 0}, {1, 1, 0.1}};
  const VoxelGrid g = build_grid(c, GridConfig{});
  EXPECT_EQ(g.nx, 32);
  EXPECT_EQ(g.ny, 32);
  EXPECT_EQ(g.nz, 64);
  EXPECT_EQ(g.voxel_count(), 65536u);
  EXPECT_EQ(g.bits.size(), 8192u);
}

TEST(Voxel, SinglePoint) {
  geom::PointCloud c;
  c.points = {{0.3, -0.2, 0.05}};
  const VoxelGrid g = build_grid(c, GridConfig{});
  const GridStats s = grid_stats(g);
  EXPECT_EQ(s.occupied, 1u);
  EXPECT_DOUBLE_EQ(s.fill_fraction, 1.0 / 65536);
}

TEST(Voxel, EmptyCloudThrows) {
  try {
    build_grid(geom::PointCloud{}, GridConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyCloud);
  }
}

TEST(Voxel, UniformHeightsSelectFifteenMicrons) {
  geom::PointCloud c;
  for (int i = 0; i <= 7000; ++i) c.points.push_back({0.001 * (i % 97), 0.001 * (i % 89), 0.0001 * i});
  EXPECT_LT(fraction_at_or_below(c, 64 * 0.010), 0.98);
  EXPECT_NEAR(fraction_at_or_below(c, 64 * 0.010), 0.914, 0.001);
  EXPECT_EQ(fraction_at_or_below(c, 64 * 0.015), 1.0);
  const VoxelGrid g = build_grid(c, GridConfig{});
  EXPECT_NEAR(g.dz, 0.015, 1e-15);
}

TEST(Voxel, XYSizesFollowRanges) {
  geom::PointCloud c;
  c.points = {{1.0, 2.0, 0.0}, {1.64, 3.28, 0.025}};
  const VoxelGrid g = build_grid(c, GridConfig{});
  EXPECT_DOUBLE_EQ(g.dx, 0.64 / 32);
  EXPECT_DOUBLE_EQ(g.dy, 1.28 / 32);
  EXPECT_EQ(g.origin.x, 1.0);
  EXPECT_EQ(g.origin.z, 0.0);
  EXPECT_DOUBLE_EQ(g.dz, 0.010);
  EXPECT_TRUE(g.get(31, 31, 2));
  EXPECT_TRUE(g.get(0, 0, 0));
}

TEST(Voxel, FuzzCoverageAndMinimalDz) {
  std::mt19937_64 gen(2024);
  const GridConfig cfg;
  for (int trial = 0; trial < 1000; ++trial) {
    const geom::PointCloud c = random_cloud(gen);
    const VoxelGrid g = build_grid(c, cfg);
    ASSERT_GE(coverage(c, g), cfg.coverage_target) << "trial " << trial;
    // dz lies on the base + k * increment ladder
    const double k = (g.dz - cfg.z_voxel_base) / cfg.z_voxel_increment;
    ASSERT_NEAR(k, std::round(k), 1e-9);
    ASSERT_GE(k, -1e-9);
    // and the next lower rung would miss the target
    if (k > 0.5) {
      const double lower = g.dz - cfg.z_voxel_increment;
      ASSERT_LT(fraction_at_or_below(c, cfg.nz * lower), cfg.coverage_target) << "trial " << trial;
    }
    ASSERT_LE(g.occupied(), c.size());
    ASSERT_EQ(g.occupied(), oracle_cells(c, g).size()) << "trial " << trial;
  }
}

TEST(Voxel, MatchesOracleCells) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 50; ++trial) {
    const geom::PointCloud c = random_cloud(gen);
    const VoxelGrid g = build_grid(c, GridConfig{});
    const auto cells = oracle_cells(c, g);
    for (int k = 0; k < g.nz; ++k)
      for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) ASSERT_EQ(g.get(i, j, k), cells.count(g.linear(i, j, k)) > 0);
  }
}

TEST(Voxel, DeterministicAndTranslationInvariant) {
  std::mt19937_64 gen(77);
  std::uniform_int_distribution<int> coord(0, 2048), zc(0, 300), sh(-64, 64);
  for (int trial = 0; trial < 40; ++trial) {
    // dyadic coordinates keep the shifted arithmetic exact
    geom::PointCloud c;
    for (int n = 0; n < 400; ++n)
      c.points.push_back({coord(gen) / 1024.0, coord(gen) / 1024.0, zc(gen) / 1024.0});
    const VoxelGrid a = build_grid(c, GridConfig{});
    EXPECT_EQ(a, build_grid(c, GridConfig{}));
    geom::PointCloud moved = c;
    const double sx = sh(gen) / 16.0, sy = sh(gen) / 16.0;
    for (auto& p : moved.points) p.x += sx, p.y += sy;
    const VoxelGrid b = build_grid(moved, GridConfig{});
    EXPECT_EQ(a.bits, b.bits);
    EXPECT_EQ(a.dz, b.dz);
    EXPECT_EQ(b.origin.x, a.origin.x + sx);
  }
}

TEST(Voxel, TopBoundaryIsClosed) {
  GridConfig cfg;
  cfg.fixed_dz = 0.01;
  geom::PointCloud c;
  c.points = {{0, 0, 0.64}, {1, 1, 0.6400001}, {0.5, 0.5, -0.01}};
  const VoxelGrid g = build_grid(c, cfg);
  EXPECT_TRUE(g.get(0, 0, 63));
  EXPECT_TRUE(g.get(16, 16, 0));
  EXPECT_EQ(g.occupied(), 2u);
}

TEST(Voxel, FixedSizesCentreTheGrid) {
  GridConfig cfg;
  cfg.fixed_dx = 0.05;
  cfg.fixed_dy = 0.05;
  cfg.fixed_dz = 0.02;
  geom::PointCloud c;
  c.points = {{0.0, 0.0, 0.0}, {1.0, 0.6, 0.3}};
  const VoxelGrid g = build_grid(c, cfg);
  EXPECT_DOUBLE_EQ(g.origin.x, 0.5 - 0.8);
  EXPECT_DOUBLE_EQ(g.origin.y, 0.3 - 0.8);
  cfg.fixed_dx = 0.01;
  EXPECT_THROW(build_grid(c, cfg), Error);
}

TEST(Voxel, InvalidConfigRejected) {
  GridConfig cfg;
  cfg.coverage_target = 1.5;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.nz = 0;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Voxel, FileRoundTrip) {
  std::mt19937_64 gen(9);
  const VoxelGrid g = build_grid(random_cloud(gen), GridConfig{});
  std::stringstream ss;
  write_grid(ss, g);
  EXPECT_EQ(ss.str().substr(0, 5), "GGVG1");
  EXPECT_EQ(ss.str().size(), 5 + 12 + 48 + 8192u);
  EXPECT_EQ(read_grid(ss), g);

  const auto path = std::filesystem::temp_directory_path() / "gluevol_voxel_roundtrip.ggvg";
  save_grid(path, g);
  EXPECT_EQ(load_grid(path), g);
  std::filesystem::remove(path);
  try {
    load_grid(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingInput);
  }
}

TEST(Voxel, CorruptFileRejected) {
  std::stringstream ss("GGVX1 garbage");
  EXPECT_THROW(read_grid(ss), Error);
}

TEST(Voxel, ConfigJsonRoundTrip) {
  GridConfig c;
  c.nz = 32;
  c.fixed_dz = 0.02;
  const nlohmann::json j = c;
  const GridConfig back = j.get<GridConfig>();
  EXPECT_EQ(back.nz, 32);
  EXPECT_EQ(back.fixed_dz, c.fixed_dz);
  EXPECT_EQ(nlohmann::json(back), j);
}
