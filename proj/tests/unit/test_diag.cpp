#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "gluevol/diag/diagnose.hpp"

using namespace gluevol;
using namespace gluevol::diag;
using scan::GlueType;

namespace {

VolumeThresholds band(double lo, double hi) {
  VolumeThresholds t;
  for (GlueType g : scan::kAllGlueTypes) t.bounds[g] = {lo, hi};
  return t;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST(Classify, BoundsAreInclusive) {
  const auto t = band(0.03, 0.05);
  EXPECT_EQ(classify(0.0299999, t, GlueType::A), FaultLabel::Insufficient);
  EXPECT_EQ(classify(0.03, t, GlueType::A), FaultLabel::Normal);
  EXPECT_EQ(classify(0.04, t, GlueType::A), FaultLabel::Normal);
  EXPECT_EQ(classify(0.05, t, GlueType::A), FaultLabel::Normal);
  EXPECT_EQ(classify(0.0500001, t, GlueType::A), FaultLabel::Excessive);
}

TEST(Classify, MonotoneInVolume) {
  const auto t = band(0.03, 0.05);
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(0.0, 0.1);
  for (int i = 0; i < 1000; ++i) {
    const double a = u(gen), b = u(gen);
    const double lo = std::min(a, b), hi = std::max(a, b);
    EXPECT_LE(static_cast<int>(classify(lo, t, GlueType::C)), static_cast<int>(classify(hi, t, GlueType::C)));
  }
}

TEST(Classify, UnknownType) {
  VolumeThresholds t;
  t.bounds[GlueType::A] = {0.01, 0.02};
  try {
    classify(0.015, t, GlueType::B);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownType);
  }
}

TEST(Thresholds, DefaultsBracketTheMiddleColumn) {
  const scan::LayoutConfig cfg;
  const VolumeThresholds t = default_thresholds(cfg);
  for (GlueType g : scan::kAllGlueTypes) {
    const double nominal = cfg.type(g).base_volume * cfg.column_scales[4];
    EXPECT_DOUBLE_EQ(t.at(g).lower_mm3, 0.75 * nominal);
    EXPECT_DOUBLE_EQ(t.at(g).upper_mm3, 1.25 * nominal);
  }
  EXPECT_NO_THROW(t.validate());
  EXPECT_THROW(default_thresholds(cfg, 0.25, 10), Error);
}

TEST(Thresholds, ColumnLabelsSplitLowMiddleHigh) {
  const scan::LayoutConfig cfg;
  const VolumeThresholds t = default_thresholds(cfg);
  std::vector<FaultLabel> labels;
  for (double s : cfg.column_scales) labels.push_back(classify(cfg.type(GlueType::A).base_volume * s, t, GlueType::A));
  EXPECT_TRUE(std::is_sorted(labels.begin(), labels.end()));
  EXPECT_EQ(std::count(labels.begin(), labels.end(), FaultLabel::Insufficient), 3);
  EXPECT_EQ(std::count(labels.begin(), labels.end(), FaultLabel::Normal), 3);
  EXPECT_EQ(std::count(labels.begin(), labels.end(), FaultLabel::Excessive), 3);
}

TEST(Thresholds, InvalidBoundsRejected) {
  EXPECT_THROW(band(0.05, 0.03).validate(), Error);
  EXPECT_THROW(band(0.0, 0.03).validate(), Error);
  EXPECT_THROW(nlohmann::json({{"A", {{"lower_mm3", 0.02}, {"upper_mm3", 0.01}}}}).get<VolumeThresholds>(), Error);
  EXPECT_THROW(nlohmann::json({{"Q", {{"lower_mm3", 0.01}, {"upper_mm3", 0.02}}}}).get<VolumeThresholds>(), Error);
}

TEST(Thresholds, JsonRoundTrip) {
  const VolumeThresholds t = default_thresholds(scan::LayoutConfig{}, 0.1, 3);
  const nlohmann::json j = t;
  EXPECT_EQ(j.get<VolumeThresholds>().bounds, t.bounds);
}

TEST(Accuracy, RangeAndPermutationInvariance) {
  std::mt19937_64 gen(2);
  std::uniform_int_distribution<int> lab(0, 2);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<FaultLabel> p, t;
    for (int i = 0; i < 1 + trial; ++i) {
      p.push_back(static_cast<FaultLabel>(lab(gen)));
      t.push_back(static_cast<FaultLabel>(lab(gen)));
    }
    const double a = accuracy(p, t);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 100.0);
    std::vector<std::size_t> perm(p.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    std::vector<FaultLabel> pp, tt;
    for (std::size_t i : perm) pp.push_back(p[i]), tt.push_back(t[i]);
    EXPECT_DOUBLE_EQ(accuracy(pp, tt), a);
    EXPECT_DOUBLE_EQ(accuracy(t, t), 100.0);
  }
}

TEST(Accuracy, TrueVolumesClassifyPerfectly) {
  const scan::LayoutConfig cfg;
  const auto t = default_thresholds(cfg);
  std::vector<FaultLabel> labels;
  for (double s : cfg.column_scales) labels.push_back(classify(0.04 * s, t, GlueType::A));
  EXPECT_DOUBLE_EQ(accuracy(labels, labels), 100.0);
}

TEST(Accuracy, LengthMismatch) {
  try {
    accuracy({FaultLabel::Normal}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
  }
}

TEST(Accuracy, ByTypeAndMacro) {
  using F = FaultLabel;
  const std::vector<F> truth{F::Normal, F::Normal, F::Excessive, F::Insufficient};
  const std::vector<F> pred{F::Normal, F::Excessive, F::Excessive, F::Insufficient};
  const std::vector<GlueType> types{GlueType::A, GlueType::A, GlueType::B, GlueType::B};
  const auto r = accuracy_by_type(pred, truth, types);
  EXPECT_DOUBLE_EQ(r.overall, 75.0);
  EXPECT_DOUBLE_EQ(r.per_type.at(GlueType::A), 50.0);
  EXPECT_DOUBLE_EQ(r.per_type.at(GlueType::B), 100.0);
  EXPECT_DOUBLE_EQ(r.macro, 75.0);
}

TEST(Confusion, CountsSumToSamples) {
  using F = FaultLabel;
  const std::vector<F> truth{F::Normal, F::Normal, F::Excessive, F::Insufficient, F::Insufficient};
  const std::vector<F> pred{F::Normal, F::Excessive, F::Excessive, F::Normal, F::Insufficient};
  const Confusion c = confusion_matrix(pred, truth);
  EXPECT_EQ(c[1][1], 1u);
  EXPECT_EQ(c[1][2], 1u);
  EXPECT_EQ(c[2][2], 1u);
  EXPECT_EQ(c[0][1], 1u);
  EXPECT_EQ(c[0][0], 1u);
  std::size_t total = 0, diag = 0;
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < 3; ++k) total += c[r][k], diag += r == k ? c[r][k] : 0;
  EXPECT_EQ(total, truth.size());
  EXPECT_DOUBLE_EQ(100.0 * diag / total, accuracy(pred, truth));
}

TEST(Timing, SummaryAndLimit) {
  TimingInput t;
  t.scan_seconds = 3000.0;
  t.prediction_seconds = 470.0;
  t.scan_seconds_20um = 2100.0;
  t.scan_seconds_50um = 1000.0;
  auto s = summarize_timing(t);
  EXPECT_DOUBLE_EQ(s.total_seconds, 3470.0);
  EXPECT_FALSE(s.exceeds_limit);
  EXPECT_DOUBLE_EQ(s.ratio_20_50, 2.1);
  EXPECT_TRUE(s.ratio_in_range);
  t.scan_seconds = 3200.0;
  t.scan_seconds_20um = 2400.0;
  s = summarize_timing(t);
  EXPECT_TRUE(s.exceeds_limit);
  EXPECT_FALSE(s.ratio_in_range);
  t.scan_seconds_50um = 0.0;
  EXPECT_EQ(summarize_timing(t).ratio_20_50, 0.0);
}

TEST(Report, WritesFilesSortedByTruth) {
  const auto dir = std::filesystem::temp_directory_path() / "gluevol_report_test";
  std::filesystem::remove_all(dir);
  CurveSet c;
  c.truth = {0.02, 0.05, 0.04};
  c.predicted = {0.021, 0.049, 0.06};
  c.mse = 1e-4;
  CurveSet att = c;
  att.attached = true;
  TimingInput t;
  t.regions = 3;
  emit_report(dir, {c, att}, band(0.03, 0.05), t);
  for (const char* f : {"curves_A_unattached.csv", "curves_A_attached.csv", "confusion.csv", "accuracy.txt", "timing.txt"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  EXPECT_EQ(slurp(dir / "curves_A_unattached.csv"),
            "index,truth_mm3,prediction_mm3\n"
            "0,0.050000000,0.049000000\n"
            "1,0.040000000,0.060000000\n"
            "2,0.020000000,0.021000000\n");
  const std::string acc = slurp(dir / "accuracy.txt");
  EXPECT_NE(acc.find("accuracy_pct=66.6667"), std::string::npos);
  EXPECT_NE(acc.find("unattached_overall_pct=66.6667"), std::string::npos);
  EXPECT_NE(slurp(dir / "confusion.csv").find("A,0,normal,0,1,1"), std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST(Report, RejectsMismatchedCurves) {
  CurveSet c;
  c.truth = {0.1};
  const auto dir = std::filesystem::temp_directory_path() / "gluevol_report_bad";
  EXPECT_THROW(emit_report(dir, {c}, band(0.03, 0.05), {}), Error);
  std::filesystem::remove_all(dir);
}
