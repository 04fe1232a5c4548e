#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gluevol/core/error.hpp"
#include "gluevol/scan/pcb.hpp"
#include "json.hpp"

namespace gluevol::diag {

enum class FaultLabel { Insufficient = 0, Normal = 1, Excessive = 2 };

inline const char* to_string(FaultLabel l) {
  switch (l) {
    case FaultLabel::Insufficient: return "insufficient";
    case FaultLabel::Normal: return "normal";
    case FaultLabel::Excessive: return "excessive";
  }
  return "normal";
}

struct Bounds {
  double lower_mm3 = 0.0;
  double upper_mm3 = 0.0;
  friend bool operator==(const Bounds&, const Bounds&) = default;
};

struct VolumeThresholds {
  std::map<scan::GlueType, Bounds> bounds;

  void validate() const {
    for (const auto& [t, b] : bounds)
      if (!(b.lower_mm3 > 0.0) || !(b.lower_mm3 < b.upper_mm3))
        throw Error(ErrorCode::Config, std::string("thresholds for type ") + scan::to_char(t) +
                                           " must satisfy 0 < lower < upper");
  }
  const Bounds& at(scan::GlueType t) const {
    auto it = bounds.find(t);
    if (it == bounds.end())
      throw Error(ErrorCode::UnknownType, std::string("no thresholds for glue type ") + scan::to_char(t));
    return it->second;
  }
};

/// Normal band of +-`tolerance` around the nominal volume of `column`
/// (1-based; the middle column by default) for every type of the layout.
inline VolumeThresholds default_thresholds(const scan::LayoutConfig& cfg, double tolerance = 0.25, int column = 0) {
  if (column <= 0) column = (cfg.columns + 1) / 2;
  if (column > cfg.columns) throw Error(ErrorCode::Config, "threshold column out of range");
  VolumeThresholds t;
  for (scan::GlueType g : scan::kAllGlueTypes) {
    const double nominal = cfg.type(g).base_volume * cfg.column_scales[static_cast<std::size_t>(column - 1)];
    t.bounds[g] = {(1.0 - tolerance) * nominal, (1.0 + tolerance) * nominal};
  }
  return t;
}

/// Bounds are inclusive: a volume equal to either bound is Normal.
inline FaultLabel classify(double volume_mm3, const VolumeThresholds& t, scan::GlueType type) {
  const Bounds& b = t.at(type);
  if (volume_mm3 < b.lower_mm3) return FaultLabel::Insufficient;
  if (volume_mm3 > b.upper_mm3) return FaultLabel::Excessive;
  return FaultLabel::Normal;
}

/// Percentage of matching labels.
inline double accuracy(const std::vector<FaultLabel>& predicted, const std::vector<FaultLabel>& truth) {
  if (predicted.size() != truth.size())
    throw Error(ErrorCode::LengthMismatch, "accuracy: " + std::to_string(predicted.size()) + " predictions vs " +
                                               std::to_string(truth.size()) + " labels");
  if (truth.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
  return 100.0 * static_cast<double>(hit) / static_cast<double>(truth.size());
}

struct AccuracyReport {
  double overall = 0.0;
  std::map<scan::GlueType, double> per_type;
  double macro = 0.0;  // mean of per-type accuracies
};

inline AccuracyReport accuracy_by_type(const std::vector<FaultLabel>& predicted, const std::vector<FaultLabel>& truth,
                                       const std::vector<scan::GlueType>& types) {
  if (types.size() != truth.size()) throw Error(ErrorCode::LengthMismatch, "accuracy: type list length mismatch");
  AccuracyReport r;
  r.overall = accuracy(predicted, truth);
  std::map<scan::GlueType, std::pair<std::vector<FaultLabel>, std::vector<FaultLabel>>> groups;
  for (std::size_t i = 0; i < types.size(); ++i) {
    groups[types[i]].first.push_back(predicted[i]);
    groups[types[i]].second.push_back(truth[i]);
  }
  for (const auto& [t, g] : groups) r.per_type[t] = accuracy(g.first, g.second);
  if (!r.per_type.empty()) {
    double s = 0.0;
    for (const auto& [t, a] : r.per_type) s += a;
    r.macro = s / static_cast<double>(r.per_type.size());
  }
  return r;
}

/// Rows are true labels, columns predicted labels.
using Confusion = std::array<std::array<std::size_t, 3>, 3>;

inline Confusion confusion_matrix(const std::vector<FaultLabel>& predicted, const std::vector<FaultLabel>& truth) {
  if (predicted.size() != truth.size()) throw Error(ErrorCode::LengthMismatch, "confusion: length mismatch");
  Confusion c{};
  for (std::size_t i = 0; i < truth.size(); ++i) ++c[static_cast<int>(truth[i])][static_cast<int>(predicted[i])];
  return c;
}

// ---------------------------------------------------------------- reports

/// Evaluated predictions for one (glue type, attached) model.
struct CurveSet {
  scan::GlueType type = scan::GlueType::A;
  bool attached = false;
  std::vector<double> truth;
  std::vector<double> predicted;
  double mse = 0.0;
};

struct TimingInput {
  double step_um = 20.0;
  std::size_t regions = 0;
  double scan_seconds = 0.0;
  double prediction_seconds = 0.0;
  double scan_seconds_20um = 0.0;
  double scan_seconds_50um = 0.0;
};

inline constexpr double kViabilityLimitSeconds = 3600.0;
inline constexpr double kRatioLow = 1.9;
inline constexpr double kRatioHigh = 2.3;

struct TimingSummary {
  double total_seconds = 0.0;
  bool exceeds_limit = false;
  double ratio_20_50 = 0.0;
  bool ratio_in_range = false;
};

inline TimingSummary summarize_timing(const TimingInput& t) {
  TimingSummary s;
  s.total_seconds = t.scan_seconds + t.prediction_seconds;
  s.exceeds_limit = s.total_seconds > kViabilityLimitSeconds;
  s.ratio_20_50 = t.scan_seconds_50um > 0.0 ? t.scan_seconds_20um / t.scan_seconds_50um : 0.0;
  s.ratio_in_range = s.ratio_20_50 >= kRatioLow && s.ratio_20_50 <= kRatioHigh;
  return s;
}

namespace detail {
inline std::string fmt(double v, int precision = 9) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(precision);
  os << v;
  return os.str();
}
}  // namespace detail

inline std::string curve_file_name(scan::GlueType t, bool attached) {
  return std::string("curves_") + scan::to_char(t) + "_" + (attached ? "attached" : "unattached") + ".csv";
}

/// Writes curves_{type}_{attached}.csv (rows sorted by descending truth),
/// confusion.csv, accuracy.txt and timing.txt into `dir`.
inline void emit_report(const std::filesystem::path& dir, const std::vector<CurveSet>& curves,
                        const VolumeThresholds& thresholds, const TimingInput& timing) {
  std::filesystem::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream os(dir / name);
    if (!os) throw Error(ErrorCode::Io, "cannot write " + (dir / name).string());
    return os;
  };

  auto confusion = open("confusion.csv");
  confusion << "type,attached,true_label,pred_insufficient,pred_normal,pred_excessive\n";
  auto acc = open("accuracy.txt");
  std::vector<FaultLabel> all_pred, all_true;
  std::vector<scan::GlueType> all_types;

  for (const auto& c : curves) {
    if (c.truth.size() != c.predicted.size()) throw Error(ErrorCode::LengthMismatch, "curve set length mismatch");
    std::vector<std::size_t> order(c.truth.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return c.truth[a] > c.truth[b]; });
    auto os = open(curve_file_name(c.type, c.attached));
    os << "index,truth_mm3,prediction_mm3\n";
    for (std::size_t r = 0; r < order.size(); ++r)
      os << r << ',' << detail::fmt(c.truth[order[r]]) << ',' << detail::fmt(c.predicted[order[r]]) << '\n';

    std::vector<FaultLabel> pred, truth;
    for (std::size_t i = 0; i < c.truth.size(); ++i) {
      truth.push_back(classify(c.truth[i], thresholds, c.type));
      pred.push_back(classify(c.predicted[i], thresholds, c.type));
    }
    const Confusion m = confusion_matrix(pred, truth);
    for (int r = 0; r < 3; ++r)
      confusion << scan::to_char(c.type) << ',' << (c.attached ? 1 : 0) << ',' << to_string(static_cast<FaultLabel>(r))
                << ',' << m[r][0] << ',' << m[r][1] << ',' << m[r][2] << '\n';
    acc << "type=" << scan::to_char(c.type) << " attached=" << (c.attached ? 1 : 0) << " samples=" << truth.size()
        << " mse_e6=" << detail::fmt(c.mse * 1e6, 6) << " accuracy_pct=" << detail::fmt(accuracy(pred, truth), 4)
        << '\n';
    if (!c.attached) {
      all_pred.insert(all_pred.end(), pred.begin(), pred.end());
      all_true.insert(all_true.end(), truth.begin(), truth.end());
      all_types.insert(all_types.end(), truth.size(), c.type);
    }
  }
  if (!all_true.empty()) {
    const auto r = accuracy_by_type(all_pred, all_true, all_types);
    acc << "unattached_overall_pct=" << detail::fmt(r.overall, 4) << " unattached_macro_pct=" << detail::fmt(r.macro, 4)
        << '\n';
  }

  const TimingSummary s = summarize_timing(timing);
  auto tm = open("timing.txt");
  tm << "step_um=" << detail::fmt(timing.step_um, 0) << '\n'
     << "regions=" << timing.regions << '\n'
     << "scan_seconds=" << detail::fmt(timing.scan_seconds, 1) << '\n'
     << "prediction_seconds=" << detail::fmt(timing.prediction_seconds, 1) << '\n'
     << "total_seconds=" << detail::fmt(s.total_seconds, 1) << '\n'
     << "limit_seconds=" << detail::fmt(kViabilityLimitSeconds, 0) << '\n'
     << "exceeds_limit=" << (s.exceeds_limit ? 1 : 0) << '\n'
     << "scan_seconds_20um=" << detail::fmt(timing.scan_seconds_20um, 1) << '\n'
     << "scan_seconds_50um=" << detail::fmt(timing.scan_seconds_50um, 1) << '\n'
     << "ratio_20_50=" << detail::fmt(s.ratio_20_50, 4) << '\n'
     << "ratio_expected=[" << detail::fmt(kRatioLow, 1) << "," << detail::fmt(kRatioHigh, 1) << "]\n"
     << "ratio_in_range=" << (s.ratio_in_range ? 1 : 0) << '\n';
}

inline void to_json(nlohmann::json& j, const VolumeThresholds& t) {
  j = nlohmann::json::object();
  for (const auto& [g, b] : t.bounds) j[std::string(1, scan::to_char(g))] = {{"lower_mm3", b.lower_mm3}, {"upper_mm3", b.upper_mm3}};
}

inline void from_json(const nlohmann::json& j, VolumeThresholds& t) {
  for (const auto& [k, v] : j.items()) {
    if (k.size() != 1) throw Error(ErrorCode::UnknownType, "unknown glue type '" + k + "'");
    t.bounds[scan::glue_type_from_char(k[0])] = {v.at("lower_mm3").get<double>(), v.at("upper_mm3").get<double>()};
  }
  t.validate();
}

}  // namespace gluevol::diag
