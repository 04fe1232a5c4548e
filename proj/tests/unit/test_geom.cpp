#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "gluevol/geom/cloud_io.hpp"
#include "gluevol/geom/cloud_ops.hpp"
#include "gluevol/geom/mesh.hpp"
#include "gluevol/geom/plane.hpp"
#include "gluevol/scan/scanner.hpp"

using namespace gluevol;
using namespace gluevol::geom;

namespace {

/// Row-major lattice with z = f(x, y); consecutive points are one step apart.
template <typename F>
PointCloud lattice(int nx, int ny, double step, F f, double x0 = 0.0, double y0 = 0.0) {
  PointCloud c;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      const double x = x0 + i * step, y = y0 + j * step;
      c.points.push_back({x, y, f(x, y)});
    }
  return c;
}

double volume_of_framed(const PointCloud& framed, double step) {
  const Plane base;
  const TriangleMesh mesh = triangulate_lattice(close_with_projection(framed, base), step);
  return mesh_volume_over_plane(mesh, base);
}

/// Plane fit, plane frame, closing and triangulation without cropping.
double pipeline_volume(const PointCloud& cloud, double step, std::uint64_t seed = 3) {
  RansacParams rp;
  rp.seed = seed;
  rp.inlier_threshold = 0.002;
  const PlaneFit fit = fit_plane_ransac(cloud, rp);
  return volume_of_framed(to_plane_frame(cloud, fit.plane), step);
}

scan::RegionSpec cap_region(double volume) {
  scan::GlueShape s;
  s.profile = scan::CapProfile::SphericalCap;
  s.bump_amplitude = 0.0;
  return scan::make_region(scan::GlueType::A, {0.0, 0.0, 1.0, 1.8}, s, volume);
}

scan::ScanConfig clean_scan(double step_um) {
  scan::ScanConfig c;
  c.step_um = step_um;
  c.noise_sigma_z = 0.0;
  c.stage_uncertainty = 0.0;
  c.pco_delay = 0.0;
  return c;
}

struct Rigid {
  double r[3][3];
  Point3 t;
  Point3 apply(const Point3& p) const {
    return {r[0][0] * p.x + r[0][1] * p.y + r[0][2] * p.z + t.x, r[1][0] * p.x + r[1][1] * p.y + r[1][2] * p.z + t.y,
            r[2][0] * p.x + r[2][1] * p.y + r[2][2] * p.z + t.z};
  }
};

/// Rotation from z-y-x angles.
Rigid make_rigid(double yaw, double pitch, double roll, Point3 t) {
  const double cy = std::cos(yaw), sy = std::sin(yaw), cp = std::cos(pitch), sp = std::sin(pitch);
  const double cr = std::cos(roll), sr = std::sin(roll);
  return {{{cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr},
           {sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr},
           {-sp, cp * sr, cp * cr}},
          t};
}

}  // namespace

// Plane fitting

TEST(PlaneFit, ExactPlaneDominatesOutliers) {
  PointCloud c;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) c.points.push_back({0.1 * i, 0.1 * j, 0.0});
  for (int k = 0; k < 5; ++k) c.points.push_back({0.05 + 0.1 * k, 0.33, 1.0});
  const PlaneFit fit = fit_plane_ransac(c, {});
  EXPECT_NEAR(fit.plane.normal.z, 1.0, 1e-12);
  EXPECT_NEAR(fit.plane.offset, 0.0, 1e-12);
  EXPECT_EQ(fit.inliers.size(), 100u);
}

TEST(PlaneFit, TwoPointsThrow) {
  PointCloud c;
  c.points = {{0, 0, 0}, {1, 0, 0}};
  try {
    fit_plane_ransac(c, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FewerThanThreePoints);
  }
}

TEST(PlaneFit, CollinearThrows) {
  PointCloud c;
  for (int i = 0; i < 10; ++i) c.points.push_back({0.1 * i, 0.2 * i, 0.3 * i});
  try {
    fit_plane_ransac(c, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateCloud);
  }
}

TEST(PlaneFit, NonPositiveThresholdRejected) {
  PointCloud c = lattice(3, 3, 0.1, [](double, double) { return 0.0; });
  RansacParams p;
  p.inlier_threshold = 0.0;
  EXPECT_THROW(fit_plane_ransac(c, p), Error);
}

TEST(PlaneFit, NoisyPlaneMatchesMonteCarloInlierFraction) {
  const double sigma = 0.002, thr = 0.005;
  const int n = 10000;
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  std::normal_distribution<double> noise(0.0, sigma);
  PointCloud c;
  for (int i = 0; i < n; ++i) c.points.push_back({u(gen), u(gen), noise(gen)});

  // Oracle: the fraction of an independent draw of the same noise within the threshold.
  std::mt19937_64 gen2(12345);
  int within = 0;
  for (int i = 0; i < 200000; ++i) within += std::abs(noise(gen2)) <= thr;
  const double oracle = within / 200000.0;
  EXPECT_NEAR(oracle, std::erf(thr / sigma / std::sqrt(2.0)), 2e-3);

  RansacParams p;
  p.inlier_threshold = thr;
  p.seed = 5;
  const PlaneFit fit = fit_plane_ransac(c, p);
  const double frac = static_cast<double>(fit.inliers.size()) / n;
  EXPECT_GE(frac, 0.97);
  EXPECT_NEAR(frac, oracle, 0.006);
  EXPECT_NEAR(std::abs(fit.plane.normal.z), 1.0, 1e-5);
}

TEST(PlaneFit, DeterministicForSeed) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> noise(0.0, 0.003);
  PointCloud c = lattice(30, 30, 0.02, [&](double x, double) { return 0.01 * x + noise(gen); });
  for (int k = 0; k < 40; ++k) c.points.push_back({0.01 * k, 0.3, 0.2});
  RansacParams p;
  p.seed = 99;
  const PlaneFit a = fit_plane_ransac(c, p), b = fit_plane_ransac(c, p);
  EXPECT_EQ(a.plane.normal, b.plane.normal);
  EXPECT_EQ(a.plane.offset, b.plane.offset);
  EXPECT_EQ(a.inliers, b.inliers);
}

TEST(PlaneFit, NormalIsUnitAndPointsTowardsDeposit) {
  PointCloud c = lattice(20, 20, 0.05, [](double x, double y) {
    const double d = std::hypot(x - 0.5, y - 0.5);
    return d < 0.2 ? 0.1 : 0.0;
  });
  for (auto& p : c.points) p.z = 2.0 - p.z;  // deposit below an upside-down substrate
  const PlaneFit fit = fit_plane_ransac(c, {});
  EXPECT_NEAR(norm(fit.plane.normal), 1.0, 1e-12);
  for (const auto& p : c.points) EXPECT_GE(fit.plane.signed_distance(p), -1e-9);
}

// Plane frame

TEST(PlaneFrame, IdentityOnXYPlane) {
  const PointCloud c = lattice(4, 5, 0.1, [](double, double) { return 0.0; });
  const PointCloud f = to_plane_frame(c, Plane{});
  ASSERT_EQ(f.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_EQ(f.points[i], c.points[i]);
}

TEST(PlaneFrame, ZIsSignedDistance) {
  const Plane pl{Point3{1.0, 2.0, 2.0} * (1.0 / 3.0), 0.7};
  PointCloud c;
  c.points.push_back(pl.normal * 0.8);
  EXPECT_NEAR(to_plane_frame(c, pl).points[0].z, 0.1, 1e-12);
}

TEST(PlaneFrame, PreservesPairwiseDistances) {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Point3 n{u(gen), u(gen), u(gen)};
    n = n * (1.0 / norm(n));
    const Plane pl{n, u(gen)};
    PointCloud c;
    for (int i = 0; i < 30; ++i) c.points.push_back({u(gen), u(gen), u(gen)});
    const PointCloud f = to_plane_frame(c, pl);
    for (std::size_t i = 0; i < c.size(); ++i) {
      EXPECT_NEAR(f.points[i].z, pl.signed_distance(c.points[i]), 1e-12);
      for (std::size_t j = i + 1; j < c.size(); ++j) {
        const double d0 = norm(c.points[i] - c.points[j]), d1 = norm(f.points[i] - f.points[j]);
        EXPECT_NEAR(d1, d0, 1e-12 * d0 + 1e-15);
      }
    }
  }
}

// Crop and close

TEST(Crop, FullBoxIsIdentity) {
  const PointCloud c = lattice(10, 10, 1.0 / 9, [](double x, double y) { return x * y; });
  const PointCloud out = crop_xy(c, {0.0, 0.0, 1.0, 1.0});
  ASSERT_EQ(out.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_EQ(out.points[i], c.points[i]);
}

TEST(Crop, EmptyResult) {
  const PointCloud c = lattice(3, 3, 0.1, [](double, double) { return 0.0; });
  try {
    crop_xy(c, {5.0, 5.0, 6.0, 6.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyResult);
  }
}

TEST(Crop, LatticeCountMatchesEnumeration) {
  // Spacing 0.1 keeps indices 0..5 per axis; spacing 1/9 keeps 0..4.
  for (const double spacing : {0.1, 1.0 / 9}) {
    const PointCloud c = lattice(10, 10, spacing, [](double, double) { return 0.0; });
    std::size_t expected = 0;
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 10; ++j) expected += i * spacing <= 0.5 && j * spacing <= 0.5;
    const PointCloud out = crop_xy(c, {0.0, 0.0, 0.5, 0.5});
    EXPECT_EQ(out.size(), expected);
    for (std::size_t i = 1; i < out.size(); ++i) {
      const bool ordered = out.points[i - 1].x < out.points[i].x ||
                           (out.points[i - 1].x == out.points[i].x && out.points[i - 1].y < out.points[i].y);
      EXPECT_TRUE(ordered);
    }
  }
  EXPECT_EQ(crop_xy(lattice(10, 10, 0.1, [](double, double) { return 0.0; }), {0.0, 0.0, 0.5, 0.5}).size(), 36u);
}

TEST(Close, DoublesCardinalityWithProjections) {
  PointCloud c;
  c.points = {{0.3, 0.4, 0.2}, {0.1, 0.1, 0.0}};
  const PointCloud out = close_with_projection(c, Plane{});
  ASSERT_EQ(out.size(), 4u);
  EXPECT_EQ(out.points[0], c.points[0]);
  EXPECT_EQ(out.points[2], (Point3{0.3, 0.4, 0.0}));
  EXPECT_EQ(out.points[3], c.points[1]);
  EXPECT_THROW(close_with_projection(PointCloud{}, Plane{}), Error);
}

// Triangulation

TEST(Lattice, SingleCellTwoTriangles) {
  const PointCloud c = lattice(2, 2, 0.02, [](double, double) { return 0.05; });
  const TriangleMesh m = triangulate_lattice(c, 0.02);
  ASSERT_EQ(m.faces.size(), 2u);
  EXPECT_NEAR(surface_area(m), 0.02 * 0.02, 1e-15);
}

TEST(Lattice, FullThreeByThree) {
  const PointCloud c = lattice(3, 3, 0.1, [](double x, double) { return 0.1 + x; });
  EXPECT_EQ(triangulate_lattice(c, 0.1).faces.size(), 8u);
}

TEST(Lattice, MissingCentreLeavesNoCompleteCell) {
  PointCloud c = lattice(3, 3, 0.1, [](double, double) { return 0.1; });
  c.points.erase(c.points.begin() + 4);
  EXPECT_EQ(triangulate_lattice(c, 0.1).faces.size(), 0u);
}

TEST(Lattice, ConflictingDuplicateThrows) {
  PointCloud c = lattice(3, 3, 0.1, [](double, double) { return 0.1; });
  c.points.push_back({0.1, 0.1, 0.2});
  try {
    triangulate_lattice(c, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InconsistentLattice);
  }
}

TEST(Lattice, NoDegenerateFacesAndValidIndices) {
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(0.0, 0.1);
  PointCloud c = lattice(12, 9, 0.02, [&](double, double) { return u(gen); });
  const TriangleMesh m = triangulate_lattice(close_with_projection(c, Plane{}), 0.02);
  for (const auto& f : m.faces) {
    for (auto v : f) EXPECT_LT(v, m.vertices.size());
    EXPECT_GT(face_area(m, f), 0.0);
  }
}

TEST(Lattice, CoversRasterScan) {
  const scan::RegionSpec r = cap_region(0.04);
  scan::ScanConfig sc;  // default noise and jitter
  sc.step_um = 20.0;
  LatticeReport rep;
  triangulate_lattice(raster_scan(r, sc), 0.02, {}, &rep);
  EXPECT_GE(static_cast<double>(rep.covered_points), 0.95 * static_cast<double>(rep.covered_points + rep.skipped_points));
}

// Volume

TEST(MeshVolume, PrismIsExact) {
  for (double h : {1e-3, 0.1, 1.0, 7.5}) {
    TriangleMesh m;
    m.vertices = {{0, 0, h}, {1, 0, h}, {0, 1, h}};
    m.faces = {{0, 1, 2}};
    EXPECT_NEAR(mesh_volume_over_plane(m, Plane{}) / (0.5 * h), 1.0, 1e-9);
  }
}

TEST(MeshVolume, MeshInPlaneIsZero) {
  TriangleMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  m.faces = {{0, 1, 2}};
  EXPECT_EQ(mesh_volume_over_plane(m, Plane{}), 0.0);
  EXPECT_THROW(mesh_volume_over_plane(TriangleMesh{}, Plane{}), Error);
}

TEST(MeshVolume, NegativeSidePolicies) {
  TriangleMesh m;
  m.vertices = {{0, 0, -0.3}, {1, 0, -0.3}, {0, 1, -0.3}};
  m.faces = {{0, 1, 2}};
  EXPECT_NEAR(mesh_volume_over_plane(m, Plane{}), -0.15, 1e-12);
  EXPECT_EQ(mesh_volume_over_plane(m, Plane{}, NegativeSidePolicy::Clamp), 0.0);
  try {
    mesh_volume_over_plane(m, Plane{}, NegativeSidePolicy::Reject);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NegativeSideVertices);
  }
}

TEST(MeshVolume, BoxDepositWithinTwoPercent) {
  // Lattice nodes sit half a step off the box edges.
  const double step = 0.02, h = 0.1;
  const PointCloud c = lattice(71, 71, step, [&](double x, double y) {
    return (x >= 0.0 && x <= 1.0 && y >= 0.0 && y <= 1.0) ? h : 0.0;
  }, -0.21, -0.21);
  EXPECT_NEAR(volume_of_framed(c, step), 0.1, 0.002);
}

TEST(MeshVolume, NonNegativeForPositiveSideClouds) {
  std::mt19937_64 gen(21);
  std::uniform_real_distribution<double> u(0.0, 0.2);
  for (int trial = 0; trial < 25; ++trial) {
    const double sparse = u(gen);
    const PointCloud c = lattice(8 + trial % 5, 7 + trial % 3, 0.02, [&](double, double) {
      const double z = u(gen);
      return z < sparse ? 0.0 : z;
    });
    EXPECT_GE(volume_of_framed(c, 0.02), 0.0);
  }
}

TEST(MeshVolume, RigidMotionInvariance) {
  const scan::RegionSpec r = cap_region(0.04);
  const PointCloud base = raster_scan(r, clean_scan(20.0));
  const double v0 = pipeline_volume(base, 0.02);
  ASSERT_GT(v0, 0.0);
  std::mt19937_64 gen(31);
  std::uniform_real_distribution<double> ang(-0.3, 0.3), shift(-5.0, 5.0);
  for (int trial = 0; trial < 6; ++trial) {
    const Rigid T = make_rigid(3.0 * ang(gen), ang(gen), ang(gen), {shift(gen), shift(gen), shift(gen)});
    PointCloud moved = base;
    for (auto& p : moved.points) p = T.apply(p);
    EXPECT_NEAR(pipeline_volume(moved, 0.02) / v0, 1.0, 1e-6) << "trial " << trial;
  }
}

TEST(MeshVolume, ConvergesAsStepShrinks) {
  const scan::RegionSpec r = cap_region(0.04);
  double prev = 1e9;
  for (double step_um : {50.0, 20.0, 10.0}) {
    const double err = std::abs(pipeline_volume(raster_scan(r, clean_scan(step_um)), step_um * 1e-3) - 0.04);
    EXPECT_LT(err, prev) << step_um;
    prev = err;
  }
}

// Cloud files

TEST(CloudIo, XyzRoundTrip) {
  PointCloud c;
  c.points = {{0.1, -2.5, 1e-7}, {3.0, 4.0, 0.123456789}};
  std::stringstream ss;
  write_xyz(ss, c);
  const PointCloud back = read_xyz(ss);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(back.points[i], c.points[i]);
}

TEST(CloudIo, BinaryRoundTripIsExact) {
  PointCloud c = lattice(3, 4, 0.02, [](double x, double y) { return x - y; });
  std::stringstream ss;
  write_ggpc(ss, c);
  EXPECT_EQ(read_ggpc(ss).points, c.points);
}

TEST(CloudIo, XyzKeepsMeta) {
  PointCloud c = lattice(2, 2, 0.02, [](double, double) { return 0.0; });
  c.meta = CloudMeta{17, 'C', 50.0, 2};
  std::stringstream ss;
  write_xyz(ss, c);
  EXPECT_EQ(read_xyz(ss).meta, c.meta);
}

TEST(CloudIo, MissingFileIsMissingInput) {
  try {
    load_cloud("/nonexistent/dir/cloud.xyz");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingInput);
  }
}
