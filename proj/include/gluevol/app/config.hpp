#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "gluevol/core/error.hpp"
#include "gluevol/data/annotate.hpp"
#include "gluevol/data/augment.hpp"
#include "gluevol/data/manifest.hpp"
#include "gluevol/diag/diagnose.hpp"
#include "gluevol/nn/rnet.hpp"
#include "gluevol/nn/train.hpp"
#include "gluevol/scan/pcb.hpp"
#include "gluevol/scan/scanner.hpp"
#include "gluevol/voxel/grid.hpp"
#include "json.hpp"

namespace gluevol::app {

inline constexpr const char* kToolVersion = "0.1.0";

enum class Profile { Paper, Tiny };

inline std::string to_string(Profile p) { return p == Profile::Paper ? "paper" : "tiny"; }
inline Profile profile_from_string(const std::string& s) {
  if (s == "paper") return Profile::Paper;
  if (s == "tiny") return Profile::Tiny;
  throw Error(ErrorCode::Config, "unknown profile '" + s + "' (expected paper or tiny)");
}

struct RunConfig {
  std::uint64_t seed = 0;
  Profile profile = Profile::Paper;
  double step_um = 20.0;
  bool allow_any_step = false;
  unsigned threads = 1;
  std::filesystem::path out = "out";
  bool quiet = false;

  /// Attach pattern of each simulated board, in board order.
  std::vector<scan::AttachPattern> boards{scan::AttachPattern::All, scan::AttachPattern::None,
                                          scan::AttachPattern::Half};
  std::string scan_extension = ".xyz";
  data::LabelSource label_source = data::LabelSource::Analytic;
  double prediction_seconds_per_pcb = 470.0;
  bool train_baseline = false;

  scan::LayoutConfig layout;
  scan::ScanConfig scan;
  data::AnnotateParams annotate;
  data::AugmentParams augment;
  voxel::GridConfig grid;
  nn::NetConfig net;
  nn::TrainConfig train;
  std::optional<diag::VolumeThresholds> thresholds;

  diag::VolumeThresholds effective_thresholds() const {
    return thresholds ? *thresholds : diag::default_thresholds(layout);
  }

  /// Pushes the run-level step and seed into the module configs.
  void sync() {
    scan.step_um = step_um;
    annotate.step_um = step_um;
    augment.min_step_um = step_um;
    scan.seed = derive_seed(seed, {1});
    augment.seed = derive_seed(seed, {3});
    annotate.ransac.seed = derive_seed(seed, {4});
    train.seed = derive_seed(seed, {5});
    train.threads = threads;
    train.profile = to_string(profile);
  }

  void validate() const {
    if (!allow_any_step && step_um != 20.0 && step_um != 50.0)
      throw Error(ErrorCode::Config, "step must be 20 or 50 um (use --any-step to override)");
    if (boards.empty()) throw Error(ErrorCode::Config, "need at least one board");
    if (scan_extension != ".xyz" && scan_extension != ".ggpc")
      throw Error(ErrorCode::Config, "scan extension must be .xyz or .ggpc");
    if (!(prediction_seconds_per_pcb >= 0.0)) throw Error(ErrorCode::Config, "prediction time must be >= 0");
    layout.validate();
    scan.validate();
    augment.validate();
    grid.validate();
    net.validate();
    train.validate();
    if (thresholds) thresholds->validate();
  }
};

/// Defaults of a profile. `paper` mirrors the full study (three boards, five
/// passes, every glue type, canonical network); `tiny` is a single-board,
/// single-pass, type-A run sized for CPU training.
inline RunConfig make_profile(Profile p) {
  RunConfig c;
  c.profile = p;
  if (p == Profile::Tiny) {
    c.boards = {scan::AttachPattern::Half};
    c.scan.passes = 1;
    c.layout.enabled_types = {scan::GlueType::A};
    c.augment.shift_fraction = 0.05;
    c.label_source = data::LabelSource::Annotated;
    c.net = nn::tiny_net_config();
    c.train.epochs = 20;
    c.train.batch_size = 16;
    c.train.adam.learning_rate = 1e-3;
    c.train.standardize_targets = true;
  }
  c.sync();
  return c;
}

inline nlohmann::json to_json(const RunConfig& c) {
  std::vector<std::string> boards;
  for (auto b : c.boards) boards.push_back(scan::to_string(b));
  nlohmann::json j;
  j["run"] = {{"seed", c.seed},
              {"profile", to_string(c.profile)},
              {"step_um", c.step_um},
              {"threads", c.threads},
              {"out", c.out.string()},
              {"boards", boards},
              {"scan_extension", c.scan_extension},
              {"label_source", data::to_string(c.label_source)},
              {"prediction_seconds_per_pcb", c.prediction_seconds_per_pcb},
              {"train_baseline", c.train_baseline}};
  j["layout"] = c.layout;
  j["scan"] = c.scan;
  j["scan"].erase("step_um");
  j["annotate"] = c.annotate;
  j["augment"] = c.augment;
  j["augment"].erase("min_step_um");
  j["grid"] = c.grid;
  j["net"] = c.net;
  j["train"] = c.train;
  j["train"].erase("profile");
  j["thresholds"] = c.effective_thresholds();
  return j;
}

/// Applies a config document on top of `c`. Unknown sections are rejected
/// so typos do not pass silently.
inline void apply_json(RunConfig& c, const nlohmann::json& j) {
  static const std::vector<std::string> known{"run", "layout", "scan", "annotate", "augment",
                                              "grid", "net", "train", "thresholds"};
  try {
    for (const auto& [k, v] : j.items())
      if (std::find(known.begin(), known.end(), k) == known.end())
        throw Error(ErrorCode::Config, "unknown config section '" + k + "'");
    if (j.contains("run")) {
      const auto& r = j.at("run");
      c.seed = r.value("seed", c.seed);
      c.step_um = r.value("step_um", c.step_um);
      c.threads = r.value("threads", c.threads);
      if (r.contains("out")) c.out = r.at("out").get<std::string>();
      if (r.contains("boards")) {
        c.boards.clear();
        for (const auto& b : r.at("boards")) c.boards.push_back(scan::attach_pattern_from_string(b.get<std::string>()));
      }
      c.scan_extension = r.value("scan_extension", c.scan_extension);
      if (r.contains("label_source")) c.label_source = data::label_source_from_string(r.at("label_source").get<std::string>());
      c.prediction_seconds_per_pcb = r.value("prediction_seconds_per_pcb", c.prediction_seconds_per_pcb);
      c.train_baseline = r.value("train_baseline", c.train_baseline);
    }
    if (j.contains("layout")) from_json(j.at("layout"), c.layout);
    if (j.contains("scan")) from_json(j.at("scan"), c.scan);
    if (j.contains("annotate")) from_json(j.at("annotate"), c.annotate);
    if (j.contains("augment")) from_json(j.at("augment"), c.augment);
    if (j.contains("grid")) from_json(j.at("grid"), c.grid);
    if (j.contains("net")) from_json(j.at("net"), c.net);
    if (j.contains("train")) from_json(j.at("train"), c.train);
    if (j.contains("thresholds")) c.thresholds = j.at("thresholds").get<diag::VolumeThresholds>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Config, std::string("config: ") + e.what());
  }
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::MissingInput, "cannot open " + path.string());
  try {
    nlohmann::json j;
    is >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadFormat, path.string() + ": " + e.what());
  }
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::filesystem::create_directories(path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path.string());
  os << j.dump(1) << '\n';
}

}  // namespace gluevol::app
