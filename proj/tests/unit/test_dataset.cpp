#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "gluevol/data/annotate.hpp"
#include "gluevol/data/augment.hpp"
#include "gluevol/data/manifest.hpp"
#include "gluevol/scan/pcb.hpp"
#include "gluevol/scan/scanner.hpp"

using namespace gluevol;
using namespace gluevol::data;

namespace {

scan::RegionSpec cap_region(double volume) {
  scan::GlueShape s;
  s.profile = scan::CapProfile::SphericalCap;
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

AnnotateParams params_for(double step_um) {
  AnnotateParams p;
  p.step_um = step_um;
  return p;
}

geom::PointCloud square_lattice(double size, double step) {
  geom::PointCloud c;
  const int n = static_cast<int>(std::lround(size / step));
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j) {
      const double x = i * step, y = j * step;
      c.points.push_back({x, y, 0.05 * std::exp(-((x - 1) * (x - 1) + (y - 1) * (y - 1)))});
    }
  return c;
}

/// Scan records for `circuits` unattached circuits of one type.
std::vector<ScanRecord> records(int circuits, int deposits, int passes, double range, bool attached = false) {
  std::vector<ScanRecord> out;
  for (int c = 0; c < circuits; ++c)
    for (int d = 1; d <= deposits; ++d)
      for (int p = 0; p < passes; ++p) {
        ScanRecord s;
        s.pcb = 1 + c / 9;
        s.row = 1;
        s.column = 1 + c % 9;
        s.deposit = d;
        s.pass = p;
        s.attached = attached;
        s.range_x = s.range_y = range;
        s.analytic_mm3 = 0.01 * s.column;
        s.annotated_mm3 = 0.0101 * s.column;
        s.path = "scans/c" + std::to_string(c) + "_d" + std::to_string(d) + "_p" + std::to_string(p) + ".xyz";
        out.push_back(s);
      }
  return out;
}

}  // namespace

// Annotation

TEST(Annotate, SphericalCapWithinTwoPercentAt20um) {
  const scan::RegionSpec r = cap_region(0.04);
  const Annotation a = annotate(scan::raster_scan(r, clean_scan(20.0)), params_for(20.0), r.glue_box());
  EXPECT_FALSE(a.empty_glue);
  EXPECT_NEAR(a.volume / scan::analytic_volume(r), 1.0, 0.02);
}

TEST(Annotate, SphericalCapWithinFourPercentAt50um) {
  const scan::RegionSpec r = cap_region(0.04);
  const Annotation a = annotate(scan::raster_scan(r, clean_scan(50.0)), params_for(50.0), r.glue_box());
  EXPECT_NEAR(a.volume / scan::analytic_volume(r), 1.0, 0.04);
}

TEST(Annotate, AutoCropMatchesBoxCrop) {
  const scan::RegionSpec r = cap_region(0.03);
  const auto cloud = scan::raster_scan(r, clean_scan(20.0));
  const Annotation boxed = annotate(cloud, params_for(20.0), r.glue_box());
  const Annotation automatic = annotate(cloud, params_for(20.0));
  EXPECT_NEAR(automatic.volume / boxed.volume, 1.0, 0.01);
}

TEST(Annotate, TiltedSubstrate) {
  scan::RegionSpec r = cap_region(0.04);
  r.substrate = {0.01, -0.008, 0.3};
  const Annotation a = annotate(scan::raster_scan(r, clean_scan(20.0)), params_for(20.0), r.glue_box());
  EXPECT_NEAR(a.volume / 0.04, 1.0, 0.02);
}

TEST(Annotate, FlatRegionIsEmpty) {
  const scan::RegionSpec r = cap_region(0.0);
  const Annotation boxed = annotate(scan::raster_scan(r, clean_scan(20.0)), params_for(20.0), r.glue_box());
  EXPECT_LT(boxed.volume, 1e-4);
  EXPECT_TRUE(boxed.empty_glue);
  const Annotation automatic = annotate(scan::raster_scan(r, clean_scan(20.0)), params_for(20.0));
  EXPECT_TRUE(automatic.empty_glue);
}

TEST(Annotate, InvariantToScanPass) {
  const scan::LayoutConfig layout;
  const scan::PcbModel pcb = scan::make_pcb(layout, 8);
  scan::ScanConfig cfg;
  cfg.seed = 15;
  for (int col : {1, 5, 9}) {
    const scan::RegionSpec& r = pcb.circuit(2, col).regions.front();
    const double v0 = annotate(scan::raster_scan(r, cfg, 0), params_for(20.0), r.glue_box()).volume;
    const double v1 = annotate(scan::raster_scan(r, cfg, 1), params_for(20.0), r.glue_box()).volume;
    EXPECT_LT(std::abs(v1 - v0) / v0, 0.005) << "column " << col;
  }
}

TEST(Annotate, UnattachedCloudsPerTypeAcrossThreeBoards) {
  const scan::LayoutConfig layout;
  std::size_t count = 0;
  int index = 1;
  for (auto pattern : {scan::AttachPattern::All, scan::AttachPattern::None, scan::AttachPattern::Half}) {
    for (const auto& r : scan::all_regions(scan::make_pcb(layout, 1, index++, pattern)))
      count += r.glue_type == scan::GlueType::A && !r.attached;
  }
  EXPECT_EQ(count, 108u);
}

// Augmentation

TEST(Augment, TwoMillimetreSquareGivesHundred) {
  AugmentParams p;
  const AxisPlan ax = plan_axis(2.0, p);
  EXPECT_NEAR(ax.shift, 0.04, 1e-15);
  EXPECT_NEAR(ax.range - ax.window, 0.16, 1e-12);
  EXPECT_EQ(ax.positions, 5);
  EXPECT_EQ(augment_count(2.0, 2.0, p), 100u);
  const auto out = augment(square_lattice(2.0, 0.02), p);
  EXPECT_EQ(out.size(), 100u);
}

TEST(Augment, MinimumStepDominatesSmallRanges) {
  AugmentParams p;
  const AxisPlan ax = plan_axis(0.5, p);
  EXPECT_DOUBLE_EQ(ax.shift, 0.02);
  EXPECT_EQ(ax.positions, static_cast<int>(std::floor(0.04 / 0.02 + 1e-4)) + 1);
}

TEST(Augment, FullWindowGivesOnePosition) {
  AugmentParams p;
  p.window_fraction = 0.999;
  EXPECT_EQ(augment_count(2.0, 2.0, p), p.noise_levels.size());
}

TEST(Augment, CountFormulaHoldsForAllRegions) {
  const scan::LayoutConfig layout;
  const scan::PcbModel pcb = scan::make_pcb(layout, 2, 1, scan::AttachPattern::Half);
  AugmentParams p;
  p.seed = 4;
  scan::ScanConfig cfg;
  for (double step : {20.0, 50.0}) {
    cfg.step_um = step;
    for (int row : {1, 2})
      for (const auto& r : pcb.circuit(row, 4).regions) {
        if (r.deposit != 1) continue;
        const auto framed = geom::to_plane_frame(scan::raster_scan(r, cfg), geom::Plane{});
        const auto e = geom::extent(framed);
        const auto out = augment(framed, p);
        EXPECT_EQ(out.size(), augment_count(e.range_x(), e.range_y(), p));
        for (const auto& a : out) {
          const auto ae = geom::extent(a.cloud);
          EXPECT_GE(ae.lo.x, e.lo.x);
          EXPECT_LE(ae.hi.x, e.hi.x);
          EXPECT_GE(ae.lo.y, e.lo.y);
          EXPECT_LE(ae.hi.y, e.hi.y);
        }
      }
  }
}

TEST(Augment, TypeAScanYieldsHundredAtPaperStep) {
  const scan::LayoutConfig layout;
  const scan::PcbModel pcb = scan::make_pcb(layout, 6);
  scan::ScanConfig cfg;
  cfg.seed = 3;
  for (const auto& r : pcb.circuit(1, 1).regions) {
    if (r.glue_type != scan::GlueType::A) continue;
    const auto e = geom::extent(scan::raster_scan(r, cfg));
    EXPECT_EQ(augment_count(e.range_x(), e.range_y(), AugmentParams{}), 100u);
  }
}

TEST(Augment, NoiseFreeLevelIsSubset) {
  const geom::PointCloud c = square_lattice(2.0, 0.02);
  std::set<std::tuple<double, double, double>> src;
  for (const auto& q : c.points) src.insert({q.x, q.y, q.z});
  for (const auto& a : augment(c, AugmentParams{})) {
    if (a.noise_level != 0.0) continue;
    for (const auto& q : a.cloud.points) EXPECT_TRUE(src.count({q.x, q.y, q.z}));
  }
}

TEST(Augment, NoiseScalesWithLevelAndIsDeterministic) {
  const geom::PointCloud c = square_lattice(2.0, 0.02);
  AugmentParams p;
  p.seed = 10;
  const auto a = augment(c, p), b = augment(c, p);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].cloud.points, b[i].cloud.points);
  const double zr = geom::extent(c).range_z();
  for (const auto& s : a) EXPECT_DOUBLE_EQ(s.noise_sigma, s.noise_level * zr);
  p.seed = 11;
  EXPECT_NE(augment(c, p)[3].cloud.points, a[3].cloud.points);
}

TEST(Augment, InvalidParamsRejected) {
  AugmentParams p;
  p.noise_levels = {0.0, 0.0};
  EXPECT_THROW(p.validate(), Error);
  p = {};
  p.window_fraction = 1.0;
  EXPECT_THROW(p.validate(), Error);
  EXPECT_THROW(augment(geom::PointCloud{}, AugmentParams{}), Error);
}

// Manifest

TEST(Manifest, PaperScaleTypeACounts) {
  const Manifest m = build_manifest(records(27, 4, 5, 2.0), AugmentParams{}, ManifestOptions{});
  EXPECT_EQ(m.count(scan::GlueType::A, false, Split::Train), 40500u);
  EXPECT_EQ(m.count(scan::GlueType::A, false, Split::Test), 13500u);
}

TEST(Manifest, TinyCountsAreDepositsTimesSixteen) {
  AugmentParams p;
  p.shift_fraction = 0.05;
  ManifestOptions opt;
  opt.passes = 1;
  const auto scans = records(9, 4, 1, 1.0);
  const Manifest m = build_manifest(scans, p, opt);
  EXPECT_EQ(m.samples.size(), scans.size() * 16);
  EXPECT_EQ(m.count(scan::GlueType::A, false, Split::Train), 27u * 16);
  EXPECT_EQ(m.count(scan::GlueType::A, false, Split::Test), 9u * 16);
}

TEST(Manifest, SplitsAreDisjointDeposits) {
  const Manifest m = build_manifest(records(9, 4, 2, 1.0), AugmentParams{}, ManifestOptions{.passes = 2});
  std::map<std::tuple<int, int, int, int>, std::set<Split>> seen;
  for (const auto& s : m.samples) {
    seen[{s.pcb, s.row, s.column, s.deposit}].insert(s.split);
    EXPECT_EQ(s.split, s.deposit == 4 ? Split::Test : Split::Train);
  }
  for (const auto& [key, splits] : seen) EXPECT_EQ(splits.size(), 1u);
}

TEST(Manifest, MissingPassIsIncomplete) {
  auto scans = records(2, 4, 5, 1.0);
  scans.erase(scans.begin() + 3);
  try {
    build_manifest(scans, AugmentParams{}, ManifestOptions{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IncompleteScanSet);
  }
}

TEST(Manifest, LabelSourceSelectsVolume) {
  ManifestOptions opt;
  opt.passes = 1;
  const Manifest analytic = build_manifest(records(1, 4, 1, 1.0), AugmentParams{}, opt);
  opt.label_source = LabelSource::Annotated;
  const Manifest annotated = build_manifest(records(1, 4, 1, 1.0), AugmentParams{}, opt);
  EXPECT_DOUBLE_EQ(analytic.samples.front().volume_mm3, 0.01);
  EXPECT_DOUBLE_EQ(annotated.samples.front().volume_mm3, 0.0101);
}

TEST(Manifest, JsonRoundTrip) {
  const Manifest m = build_manifest(records(2, 4, 1, 1.0), AugmentParams{}, ManifestOptions{.passes = 1});
  const nlohmann::json j = manifest_to_json(m);
  EXPECT_EQ(manifest_to_json(manifest_from_json(j)), j);
}

// Label propagation

TEST(Propagate, MeanOfColumn) {
  ManifestOptions opt;
  opt.passes = 1;
  opt.label_source = LabelSource::Annotated;
  Manifest m = build_manifest(records(1, 4, 1, 1.0, true), AugmentParams{}, opt);
  const Manifest out = propagate_labels(m, {{{'A', 1}, {0.010, 0.012}}});
  for (const auto& s : out.samples) EXPECT_NEAR(s.volume_mm3, 0.011, 1e-15);
  const Manifest single = propagate_labels(m, {{{'A', 1}, {0.0123}}});
  for (const auto& s : single.samples) EXPECT_EQ(s.volume_mm3, 0.0123);
}

TEST(Propagate, MissingColumnThrows) {
  ManifestOptions opt;
  opt.passes = 1;
  const Manifest m = build_manifest(records(2, 4, 1, 1.0, true), AugmentParams{}, opt);
  try {
    propagate_labels(m, {{{'A', 1}, {0.01}}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingColumnAnnotation);
  }
}

TEST(Propagate, LabelsEveryAttachedSampleAndKeepsColumnOrder) {
  ManifestOptions opt;
  opt.passes = 1;
  opt.label_source = LabelSource::Annotated;
  auto scans = records(9, 4, 1, 1.0, true);
  auto bare = records(9, 4, 1, 1.0, false);
  for (auto& s : bare) s.row = 2, s.path += ".bare";
  scans.insert(scans.end(), bare.begin(), bare.end());
  ColumnAnnotations ann;
  for (const auto& s : bare) ann[{'A', s.column}].push_back(*s.annotated_mm3 * (1.0 + 0.001 * s.deposit));
  const Manifest out = propagate_labels(build_manifest(scans, AugmentParams{}, opt), ann);
  std::map<int, double> by_column;
  for (const auto& s : out.samples) {
    if (!s.attached) continue;
    ASSERT_TRUE(s.annotated_mm3.has_value());
    by_column[s.column] = s.volume_mm3;
  }
  ASSERT_EQ(by_column.size(), 9u);
  double prev = 0.0;
  for (const auto& [col, v] : by_column) {
    EXPECT_GT(v, prev);
    prev = v;
  }
}
