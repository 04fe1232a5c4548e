#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "gluevol/core/error.hpp"
#include "gluevol/data/augment.hpp"
#include "gluevol/scan/region.hpp"
#include "json.hpp"

namespace gluevol::data {

enum class Split { Train, Test };
enum class LabelSource { Analytic, Annotated };

inline const char* to_string(Split s) { return s == Split::Train ? "train" : "test"; }
inline const char* to_string(LabelSource s) { return s == LabelSource::Analytic ? "analytic" : "annotated"; }

inline LabelSource label_source_from_string(const std::string& s) {
  if (s == "analytic") return LabelSource::Analytic;
  if (s == "annotated") return LabelSource::Annotated;
  throw Error(ErrorCode::Config, "unknown label source '" + s + "'");
}

/// One simulated (or recorded) regional scan.
struct ScanRecord {
  std::string path;  // relative to the workspace
  int pcb = 1, row = 1, column = 1, deposit = 1, pass = 0;
  scan::GlueType glue_type = scan::GlueType::A;
  bool attached = false;
  double range_x = 0.0, range_y = 0.0;  // plane-frame XY ranges, mm
  double analytic_mm3 = 0.0;
  std::optional<double> annotated_mm3;

  auto deposit_key() const { return std::make_tuple(pcb, row, column, static_cast<int>(glue_type), deposit); }
  auto key() const { return std::make_tuple(pcb, row, column, static_cast<int>(glue_type), deposit, pass); }
  std::string stem() const {
    const std::filesystem::path p(path);
    return p.stem().string();
  }
};

struct Sample {
  std::string path;  // augmented cloud
  std::string grid;  // occupancy grid
  std::string source;  // scan it was cut from
  int pcb = 1, row = 1, column = 1, deposit = 1, pass = 0;
  scan::GlueType glue_type = scan::GlueType::A;
  bool attached = false;
  int crop = 0;
  int noise_index = 0;
  double noise_level = 0.0;
  double volume_mm3 = 0.0;  // training label
  double analytic_mm3 = 0.0;
  std::optional<double> annotated_mm3;
  Split split = Split::Train;
};

struct Manifest {
  std::vector<Sample> samples;
  nlohmann::json provenance = nlohmann::json::object();
  LabelSource label_source = LabelSource::Analytic;

  /// Samples per (glue type, attached, split).
  std::map<std::tuple<char, bool, std::string>, std::size_t> counts() const {
    std::map<std::tuple<char, bool, std::string>, std::size_t> c;
    for (const auto& s : samples) ++c[{scan::to_char(s.glue_type), s.attached, to_string(s.split)}];
    return c;
  }
  std::size_t count(scan::GlueType t, bool attached, Split split) const {
    return static_cast<std::size_t>(std::count_if(samples.begin(), samples.end(), [&](const Sample& s) {
      return s.glue_type == t && s.attached == attached && s.split == split;
    }));
  }
};

/// The last deposit of each type on a circuit is held out for testing.
inline Split split_for_deposit(int deposit, int deposits_per_type) {
  return deposit >= deposits_per_type ? Split::Test : Split::Train;
}

struct ManifestOptions {
  int passes = 5;
  int deposits_per_type = 4;
  LabelSource label_source = LabelSource::Analytic;
  std::string cloud_dir = "augmented";
  std::string grid_dir = "grids";
  std::string cloud_ext = ".ggpc";
};

/// Expands every scan into its augmented samples and assigns splits by
/// deposit, so all augmentations of one physical deposit share a split.
inline Manifest build_manifest(std::vector<ScanRecord> scans, const AugmentParams& aug, const ManifestOptions& opt) {
  aug.validate();
  std::sort(scans.begin(), scans.end(), [](const ScanRecord& a, const ScanRecord& b) { return a.key() < b.key(); });

  std::map<decltype(scans.front().deposit_key()), std::set<int>> passes;
  for (const auto& s : scans) {
    if (!passes[s.deposit_key()].insert(s.pass).second)
      throw Error(ErrorCode::IncompleteScanSet, "duplicate scan " + s.path);
  }
  for (const auto& [key, set] : passes) {
    if (static_cast<int>(set.size()) != opt.passes || *set.begin() != 0 || *set.rbegin() != opt.passes - 1)
      throw Error(ErrorCode::IncompleteScanSet, "deposit pcb" + std::to_string(std::get<0>(key)) + "_c" +
                                                    std::to_string(std::get<1>(key)) + std::to_string(std::get<2>(key)) +
                                                    " has " + std::to_string(set.size()) + " of " +
                                                    std::to_string(opt.passes) + " passes");
  }

  Manifest m;
  m.label_source = opt.label_source;
  for (const auto& s : scans) {
    const AxisPlan ax = plan_axis(s.range_x, aug), ay = plan_axis(s.range_y, aug);
    const std::string stem = s.stem();
    for (int ix = 0; ix < ax.positions; ++ix)
      for (int iy = 0; iy < ay.positions; ++iy)
        for (std::size_t li = 0; li < aug.noise_levels.size(); ++li) {
          Sample t;
          t.crop = ix * ay.positions + iy;
          t.noise_index = static_cast<int>(li);
          t.noise_level = aug.noise_levels[li];
          const std::string name = stem + "_k" + std::to_string(t.crop) + "_n" + std::to_string(li);
          t.path = opt.cloud_dir + "/" + name + opt.cloud_ext;
          t.grid = opt.grid_dir + "/" + name + ".ggvg";
          t.source = s.path;
          t.pcb = s.pcb, t.row = s.row, t.column = s.column, t.deposit = s.deposit, t.pass = s.pass;
          t.glue_type = s.glue_type;
          t.attached = s.attached;
          t.analytic_mm3 = s.analytic_mm3;
          t.annotated_mm3 = s.attached ? std::nullopt : s.annotated_mm3;
          t.split = split_for_deposit(s.deposit, opt.deposits_per_type);
          t.volume_mm3 = s.analytic_mm3;
          if (opt.label_source == LabelSource::Annotated && t.annotated_mm3) t.volume_mm3 = *t.annotated_mm3;
          m.samples.push_back(std::move(t));
        }
  }
  return m;
}

/// Annotated volumes of unattached deposits per (glue type, column).
using ColumnAnnotations = std::map<std::pair<char, int>, std::vector<double>>;

/// Attached deposits cannot be measured directly; they take the mean
/// annotated volume of unattached deposits of the same type and column.
inline Manifest propagate_labels(Manifest m, const ColumnAnnotations& unattached) {
  for (auto& s : m.samples) {
    if (!s.attached) {
      if (m.label_source == LabelSource::Annotated && s.annotated_mm3) s.volume_mm3 = *s.annotated_mm3;
      continue;
    }
    const auto it = unattached.find({scan::to_char(s.glue_type), s.column});
    if (it == unattached.end() || it->second.empty())
      throw Error(ErrorCode::MissingColumnAnnotation, std::string("no unattached annotation for type ") +
                                                          scan::to_char(s.glue_type) + " column " +
                                                          std::to_string(s.column));
    double sum = 0.0;
    for (double v : it->second) sum += v;
    s.annotated_mm3 = sum / static_cast<double>(it->second.size());
    if (m.label_source == LabelSource::Annotated) s.volume_mm3 = *s.annotated_mm3;
  }
  return m;
}

// Serialisation

inline void to_json(nlohmann::json& j, const Sample& s) {
  j = {{"path", s.path},
       {"grid", s.grid},
       {"source", s.source},
       {"pcb", s.pcb},
       {"row", s.row},
       {"column", s.column},
       {"deposit", s.deposit},
       {"type", std::string(1, scan::to_char(s.glue_type))},
       {"attached", s.attached},
       {"pass", s.pass},
       {"crop", s.crop},
       {"noise_index", s.noise_index},
       {"noise_level", s.noise_level},
       {"volume_mm3", s.volume_mm3},
       {"analytic_mm3", s.analytic_mm3},
       {"annotated_mm3", s.annotated_mm3 ? nlohmann::json(*s.annotated_mm3) : nlohmann::json(nullptr)},
       {"split", to_string(s.split)}};
}

inline void from_json(const nlohmann::json& j, Sample& s) {
  s.path = j.at("path").get<std::string>();
  s.grid = j.value("grid", std::string());
  s.source = j.value("source", std::string());
  s.pcb = j.value("pcb", 1);
  s.row = j.value("row", 1);
  s.column = j.at("column").get<int>();
  s.deposit = j.value("deposit", 1);
  s.glue_type = scan::glue_type_from_char(j.at("type").get<std::string>().at(0));
  s.attached = j.at("attached").get<bool>();
  s.pass = j.at("pass").get<int>();
  s.crop = j.at("crop").get<int>();
  s.noise_index = j.value("noise_index", 0);
  s.noise_level = j.at("noise_level").get<double>();
  s.volume_mm3 = j.at("volume_mm3").get<double>();
  s.analytic_mm3 = j.value("analytic_mm3", s.volume_mm3);
  if (j.contains("annotated_mm3") && !j.at("annotated_mm3").is_null()) s.annotated_mm3 = j.at("annotated_mm3").get<double>();
  const auto split = j.at("split").get<std::string>();
  if (split != "train" && split != "test") throw Error(ErrorCode::BadFormat, "bad split '" + split + "'");
  s.split = split == "train" ? Split::Train : Split::Test;
}

inline nlohmann::json manifest_to_json(const Manifest& m) {
  nlohmann::json j;
  j["label_source"] = to_string(m.label_source);
  j["provenance"] = m.provenance;
  j["samples"] = m.samples;
  nlohmann::json counts = nlohmann::json::array();
  for (const auto& [k, n] : m.counts())
    counts.push_back({{"type", std::string(1, std::get<0>(k))}, {"attached", std::get<1>(k)}, {"split", std::get<2>(k)}, {"count", n}});
  j["counts"] = counts;
  return j;
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
  Manifest m;
  m.label_source = label_source_from_string(j.value("label_source", std::string("analytic")));
  m.provenance = j.value("provenance", nlohmann::json::object());
  m.samples = j.at("samples").get<std::vector<Sample>>();
  return m;
}

inline void save_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path.string());
  os << manifest_to_json(m).dump(1) << '\n';
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::MissingInput, "manifest not found: " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadFormat, path.string() + ": " + e.what());
  }
  return manifest_from_json(j);
}

namespace detail {
inline std::string num(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}
}  // namespace detail

/// One row per source scan with its labels, for auditing.
inline void write_label_csv(std::ostream& os, const Manifest& m) {
  os << "source,pcb,row,column,type,deposit,pass,attached,split,analytic_mm3,annotated_mm3,label_mm3\n";
  std::set<std::string> seen;
  for (const auto& s : m.samples) {
    if (!seen.insert(s.source).second) continue;
    os << s.source << ',' << s.pcb << ',' << s.row << ',' << s.column << ',' << scan::to_char(s.glue_type) << ','
       << s.deposit << ',' << s.pass << ',' << (s.attached ? 1 : 0) << ',' << to_string(s.split) << ','
       << detail::num(s.analytic_mm3) << ',' << (s.annotated_mm3 ? detail::num(*s.annotated_mm3) : std::string()) << ','
       << detail::num(s.volume_mm3) << '\n';
  }
}

}  // namespace gluevol::data
