#pragma once

#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gluevol/app/config.hpp"
#include "gluevol/core/parallel.hpp"
#include "gluevol/geom/cloud_io.hpp"
#include "gluevol/nn/metrics.hpp"

namespace gluevol::app {

namespace fs = std::filesystem;

/// key=value line logger.
class Log {
 public:
  explicit Log(bool quiet = false, std::ostream& os = std::cerr) : quiet_(quiet), os_(os) {}
  void operator()(const std::string& stage, std::initializer_list<std::pair<std::string, std::string>> kv) const {
    if (quiet_) return;
    std::ostringstream line;
    line << "stage=" << stage;
    for (const auto& [k, v] : kv) line << ' ' << k << '=' << v;
    os_ << line.str() << '\n';
  }

 private:
  bool quiet_;
  std::ostream& os_;
};

inline std::string str(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}
inline std::string str(std::size_t v) { return std::to_string(v); }

/// Output layout below the run directory.
struct Paths {
  fs::path root;
  fs::path scans() const { return root / "scans"; }
  fs::path scan_index() const { return root / "scans" / "scans.json"; }
  fs::path annotations() const { return root / "annotations.json"; }
  fs::path manifest() const { return root / "manifest.json"; }
  fs::path labels() const { return root / "labels.csv"; }
  fs::path models() const { return root / "models"; }
  fs::path eval() const { return root / "eval"; }
  fs::path reports() const { return root / "reports"; }
  fs::path thresholds() const { return root / "thresholds.json"; }
};

inline std::string group_tag(scan::GlueType t, bool attached) {
  return std::string(1, scan::to_char(t)) + "_" + (attached ? "attached" : "unattached");
}

inline void require_file(const fs::path& p, const std::string& hint) {
  if (!fs::exists(p)) throw Error(ErrorCode::MissingInput, p.string() + " not found; " + hint);
}

inline nlohmann::json box_json(const geom::BoundingBox2& b) { return {b.min_x, b.min_y, b.max_x, b.max_y}; }
inline geom::BoundingBox2 box_from(const nlohmann::json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(), j.at(3).get<double>()};
}

// ------------------------------------------------------------- simulate

struct SimulateResult {
  std::size_t scans = 0;
  double scan_seconds = 0.0;
};

inline SimulateResult run_simulate(const RunConfig& cfg, const Log& log) {
  const Paths P{cfg.out};
  fs::create_directories(P.scans());
  struct Item {
    scan::RegionSpec region;
    int pass;
    std::string path;
  };
  std::vector<Item> items;
  std::vector<scan::RegionSpec> board_one;
  nlohmann::json boards = nlohmann::json::array();
  for (std::size_t b = 0; b < cfg.boards.size(); ++b) {
    const int idx = static_cast<int>(b + 1);
    const std::uint64_t seed = derive_seed(cfg.seed, {2, static_cast<std::uint64_t>(idx)});
    const scan::PcbModel pcb = scan::make_pcb(cfg.layout, seed, idx, cfg.boards[b]);
    boards.push_back({{"pcb", idx}, {"pattern", scan::to_string(cfg.boards[b])}, {"seed", seed},
                      {"regions", pcb.region_count()}});
    const auto regions = scan::all_regions(pcb);
    if (b == 0) board_one = regions;
    for (const auto& r : regions)
      for (int pass = 0; pass < cfg.scan.passes; ++pass)
        items.push_back({r, pass, "scans/" + r.name() + "_pass" + std::to_string(pass + 1) + cfg.scan_extension});
  }

  parallel_for(items.size(), cfg.threads, [&](std::size_t i) {
    const auto cloud = scan::raster_scan(items[i].region, cfg.scan, items[i].pass);
    geom::save_cloud(P.root / items[i].path, cloud);
  });

  nlohmann::json index = nlohmann::json::array();
  for (const auto& it : items) {
    const auto& r = it.region;
    index.push_back({{"path", it.path},
                     {"id", r.id},
                     {"pcb", r.pcb},
                     {"row", r.row},
                     {"column", r.column},
                     {"deposit", r.deposit},
                     {"pass", it.pass},
                     {"type", std::string(1, scan::to_char(r.glue_type))},
                     {"attached", r.attached},
                     {"analytic_mm3", scan::analytic_volume(r)},
                     {"glue_box", box_json(r.glue_box())}});
  }
  scan::ScanConfig s20 = cfg.scan, s50 = cfg.scan;
  s20.step_um = 20.0;
  s50.step_um = 50.0;
  SimulateResult res;
  res.scans = items.size();
  res.scan_seconds = scan::scan_time_estimate(board_one, cfg.scan);
  nlohmann::json timing = {{"step_um", cfg.step_um},
                           {"regions_per_pcb", board_one.size()},
                           {"scan_seconds_per_pcb", res.scan_seconds},
                           {"scan_seconds_20um", scan::scan_time_estimate(board_one, s20)},
                           {"scan_seconds_50um", scan::scan_time_estimate(board_one, s50)}};
  write_json_file(P.scan_index(), {{"boards", boards}, {"scan", cfg.scan}, {"timing", timing}, {"scans", index}});
  log("simulate", {{"boards", str(cfg.boards.size())},
                   {"scans", str(items.size())},
                   {"step_um", str(cfg.step_um)},
                   {"scan_seconds_per_pcb", str(res.scan_seconds)}});
  return res;
}

// ------------------------------------------------------------- annotate

inline void run_annotate(const RunConfig& cfg, const Log& log) {
  const Paths P{cfg.out};
  require_file(P.scan_index(), "run `simulate` first");
  const auto index = read_json_file(P.scan_index());
  const auto& scans = index.at("scans");
  std::vector<nlohmann::json> out(scans.size());
  parallel_for(scans.size(), cfg.threads, [&](std::size_t i) {
    const auto& s = scans[i];
    const fs::path path = P.root / s.at("path").get<std::string>();
    require_file(path, "scan listed in the index is missing");
    const auto cloud = geom::load_cloud(path);
    data::AnnotateParams ap = cfg.annotate;
    ap.ransac.seed = derive_seed(cfg.annotate.ransac.seed, {s.at("id").get<std::uint64_t>(), s.at("pass").get<std::uint64_t>()});
    nlohmann::json rec = {{"path", s.at("path")}};
    geom::Plane plane;
    if (s.at("attached").get<bool>()) {
      plane = geom::fit_plane_ransac(cloud, ap.ransac).plane;
      rec["volume_mm3"] = nullptr;
    } else {
      const auto a = data::annotate(cloud, ap, box_from(s.at("glue_box")));
      plane = a.plane;
      rec["volume_mm3"] = a.volume;
      rec["empty_glue"] = a.empty_glue;
    }
    rec["plane"] = {plane.normal.x, plane.normal.y, plane.normal.z, plane.offset};
    out[i] = rec;
  });
  std::size_t unattached = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < scans.size(); ++i)
    if (!out[i].at("volume_mm3").is_null()) {
      ++unattached;
      const double truth = scans[i].at("analytic_mm3").get<double>();
      if (truth > 0.0) worst = std::max(worst, std::abs(out[i].at("volume_mm3").get<double>() - truth) / truth);
    }
  write_json_file(P.annotations(), {{"annotations", out}, {"params", cfg.annotate}});
  log("annotate", {{"scans", str(scans.size())}, {"annotated", str(unattached)}, {"max_rel_error", str(worst)}});
}

// -------------------------------------------------------------- augment

inline data::Manifest run_augment(const RunConfig& cfg, const Log& log) {
  const Paths P{cfg.out};
  require_file(P.scan_index(), "run `simulate` first");
  require_file(P.annotations(), "run `annotate` first");
  const auto index = read_json_file(P.scan_index());
  const auto ann = read_json_file(P.annotations()).at("annotations");
  const auto& scans = index.at("scans");
  if (ann.size() != scans.size()) throw Error(ErrorCode::MissingInput, "annotations do not match the scan index; rerun `annotate`");
  fs::create_directories(P.root / "augmented");

  std::vector<data::ScanRecord> records(scans.size());
  parallel_for(scans.size(), cfg.threads, [&](std::size_t i) {
    const auto& s = scans[i];
    const auto cloud = geom::load_cloud(P.root / s.at("path").get<std::string>());
    const auto& pl = ann[i].at("plane");
    const geom::Plane plane{{pl[0].get<double>(), pl[1].get<double>(), pl[2].get<double>()}, pl[3].get<double>()};
    const auto framed = geom::to_plane_frame(cloud, plane);
    const auto e = geom::extent(framed);

    data::ScanRecord r;
    r.path = s.at("path").get<std::string>();
    r.pcb = s.at("pcb"), r.row = s.at("row"), r.column = s.at("column"), r.deposit = s.at("deposit"), r.pass = s.at("pass");
    r.glue_type = scan::glue_type_from_char(s.at("type").get<std::string>().at(0));
    r.attached = s.at("attached");
    r.range_x = e.range_x();
    r.range_y = e.range_y();
    r.analytic_mm3 = s.at("analytic_mm3");
    if (!ann[i].at("volume_mm3").is_null()) r.annotated_mm3 = ann[i].at("volume_mm3").get<double>();

    data::AugmentParams ap = cfg.augment;
    ap.seed = derive_seed(cfg.augment.seed, {s.at("id").get<std::uint64_t>(), static_cast<std::uint64_t>(r.pass)});
    const std::string stem = r.stem();
    for (const auto& a : data::augment(framed, ap))
      geom::save_cloud(P.root / "augmented" /
                           (stem + "_k" + std::to_string(a.crop_index) + "_n" + std::to_string(a.noise_index) + ".ggpc"),
                       a.cloud);
    records[i] = std::move(r);
  });

  data::ColumnAnnotations columns;
  for (const auto& r : records)
    if (!r.attached && r.annotated_mm3) columns[{scan::to_char(r.glue_type), r.column}].push_back(*r.annotated_mm3);

  data::ManifestOptions opt;
  opt.passes = cfg.scan.passes;
  opt.deposits_per_type = cfg.layout.deposits_per_type;
  opt.label_source = cfg.label_source;
  data::Manifest m = data::propagate_labels(data::build_manifest(records, cfg.augment, opt), columns);
  m.provenance = {{"tool_version", kToolVersion},
                  {"seed", cfg.seed},
                  {"profile", to_string(cfg.profile)},
                  {"boards", index.at("boards")},
                  {"scan", cfg.scan},
                  {"augment", cfg.augment},
                  {"label_source", data::to_string(cfg.label_source)}};
  data::save_manifest(P.manifest(), m);
  std::ofstream csv(P.labels());
  if (!csv) throw Error(ErrorCode::Io, "cannot write " + P.labels().string());
  data::write_label_csv(csv, m);
  log("augment", {{"scans", str(records.size())}, {"samples", str(m.samples.size())}});
  return m;
}

// ------------------------------------------------------------- voxelize

inline void run_voxelize(const RunConfig& cfg, const Log& log) {
  const Paths P{cfg.out};
  require_file(P.manifest(), "run `augment` first");
  const auto m = data::load_manifest(P.manifest());
  fs::create_directories(P.root / "grids");
  std::vector<double> fill(m.samples.size()), cover(m.samples.size());
  parallel_for(m.samples.size(), cfg.threads, [&](std::size_t i) {
    const auto& s = m.samples[i];
    const fs::path src = P.root / s.path;
    require_file(src, "augmented cloud missing; rerun `augment`");
    const auto cloud = geom::load_cloud(src);
    const auto g = voxel::build_grid(cloud, cfg.grid);
    voxel::save_grid(P.root / s.grid, g);
    fill[i] = voxel::grid_stats(g).fill_fraction;
    cover[i] = voxel::coverage(cloud, g);
  });
  const double mean_fill = fill.empty() ? 0.0 : std::accumulate(fill.begin(), fill.end(), 0.0) / static_cast<double>(fill.size());
  const double min_cover = cover.empty() ? 0.0 : *std::min_element(cover.begin(), cover.end());
  log("voxelize", {{"grids", str(m.samples.size())}, {"mean_fill", str(mean_fill)}, {"min_coverage", str(min_cover)}});
}

// ---------------------------------------------------------------- train

struct Group {
  scan::GlueType type;
  bool attached;
  friend auto operator<=>(const Group&, const Group&) = default;
};

inline std::vector<Group> groups_of(const data::Manifest& m) {
  std::set<Group> g;
  for (const auto& s : m.samples) g.insert({s.glue_type, s.attached});
  return {g.begin(), g.end()};
}

inline nn::GridSet load_split(const Paths& P, const data::Manifest& m, Group g, data::Split split, unsigned threads) {
  std::vector<const data::Sample*> sel;
  for (const auto& s : m.samples)
    if (s.glue_type == g.type && s.attached == g.attached && s.split == split) sel.push_back(&s);
  nn::GridSet set;
  set.grids.resize(sel.size());
  set.targets.resize(sel.size());
  parallel_for(sel.size(), threads, [&](std::size_t i) {
    const fs::path path = P.root / sel[i]->grid;
    require_file(path, "grid missing; run `voxelize` first");
    set.grids[i] = voxel::load_grid(path);
    set.targets[i] = sel[i]->volume_mm3;
  });
  return set;
}

inline std::string model_name(const std::string& kind, Group g) { return kind + "_" + group_tag(g.type, g.attached) + ".ggnn"; }

inline void run_train(const RunConfig& cfg, const Log& log) {
  const Paths P{cfg.out};
  require_file(P.manifest(), "run `augment` first");
  const auto m = data::load_manifest(P.manifest());
  fs::create_directories(P.models());
  for (const Group g : groups_of(m)) {
    const auto train = load_split(P, m, g, data::Split::Train, cfg.threads);
    const auto test = load_split(P, m, g, data::Split::Test, cfg.threads);
    if (train.empty()) throw Error(ErrorCode::EmptySplit, "no training samples for " + group_tag(g.type, g.attached));
    struct Kind {
      std::string name;
      nn::NetConfig net;
    };
    std::vector<Kind> kinds{{"rnet", cfg.net}};
    if (cfg.train_baseline) kinds.push_back({"baseline", nn::baseline_config(cfg.net)});
    for (const auto& k : kinds) {
      nn::TrainConfig tc = cfg.train;
      tc.seed = derive_seed(cfg.train.seed, {static_cast<std::uint64_t>(scan::index_of(g.type)), g.attached ? 1u : 0u,
                                             k.name == "rnet" ? 0u : 1u});
      const auto t0 = std::chrono::steady_clock::now();
      const auto r = nn::train<float>(train, test.empty() ? nullptr : &test, k.net, tc);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      nn::save_weights(P.models() / model_name(k.name, g), r.weights);
      nn::write_history_csv(P.models() / ("history_" + k.name + "_" + group_tag(g.type, g.attached) + ".csv"), r.history);
      const double last_train = r.history.records.empty() ? 0.0 : r.history.records.back().train_mse;
      const double last_test = r.history.records.empty() ? 0.0 : r.history.records.back().test_mse;
      log("train", {{"model", k.name},
                    {"group", group_tag(g.type, g.attached)},
                    {"train_samples", str(train.size())},
                    {"test_samples", str(test.size())},
                    {"epochs", std::to_string(tc.epochs)},
                    {"train_mse_e6", str(last_train * 1e6)},
                    {"test_mse_e6", str(last_test * 1e6)},
                    {"seconds", str(secs)}});
    }
  }
}

// ----------------------------------------------------------------- eval

struct GroupEval {
  Group group;
  std::string model;
  nn::EvalResult result;
  double baseline_mse = 0.0;  // mean-of-train-targets predictor
  double r2 = 0.0;
  double spearman = 0.0;
};

inline fs::path eval_file(const Paths& P, const std::string& model, Group g) {
  return P.eval() / ("results_" + model + "_" + group_tag(g.type, g.attached) + ".json");
}

inline std::vector<GroupEval> run_eval(const RunConfig& cfg, const Log& log) {
  const Paths P{cfg.out};
  require_file(P.manifest(), "run `augment` first");
  const auto m = data::load_manifest(P.manifest());
  fs::create_directories(P.eval());
  std::vector<GroupEval> out;
  nlohmann::json summary = nlohmann::json::array();
  for (const Group g : groups_of(m)) {
    for (const std::string kind : {"rnet", "baseline"}) {
      const fs::path wpath = P.models() / model_name(kind, g);
      if (!fs::exists(wpath)) {
        if (kind == "rnet") require_file(wpath, "run `train` first");
        continue;
      }
      const auto w = nn::load_weights<float>(wpath);
      const auto test = load_split(P, m, g, data::Split::Test, cfg.threads);
      const auto train = load_split(P, m, g, data::Split::Train, cfg.threads);
      GroupEval e{g, kind, nn::evaluate(w, test, cfg.threads)};
      e.baseline_mse = nn::mean_predictor_mse(train.targets, test.targets);
      e.r2 = nn::r_squared(e.result.predictions, e.result.truth);
      e.spearman = nn::spearman(e.result.predictions, e.result.truth);
      const nlohmann::json rec = {{"model", kind},
                                  {"type", std::string(1, scan::to_char(g.type))},
                                  {"attached", g.attached},
                                  {"samples", test.size()},
                                  {"mse_mm6", e.result.mse},
                                  {"mse_e6", e.result.mse * 1e6},
                                  {"mean_predictor_mse_mm6", e.baseline_mse},
                                  {"mse_ratio", e.baseline_mse > 0.0 ? e.result.mse / e.baseline_mse : 0.0},
                                  {"r2", e.r2},
                                  {"spearman", e.spearman}};
      summary.push_back(rec);
      write_json_file(eval_file(P, kind, g), {{"summary", rec}, {"truth_mm3", e.result.truth}, {"prediction_mm3", e.result.predictions}});
      log("eval", {{"model", kind},
                   {"group", group_tag(g.type, g.attached)},
                   {"mse_e6", str(e.result.mse * 1e6)},
                   {"mse_ratio", str(rec.at("mse_ratio").get<double>())},
                   {"r2", str(e.r2)},
                   {"spearman", str(e.spearman)}});
      out.push_back(std::move(e));
    }
  }
  write_json_file(P.eval() / "summary.json", summary);
  return out;
}

// ------------------------------------------------------------- diagnose

inline std::vector<diag::CurveSet> load_curves(const Paths& P, const data::Manifest& m, const std::string& kind = "rnet") {
  std::vector<diag::CurveSet> curves;
  for (const Group g : groups_of(m)) {
    const fs::path f = eval_file(P, kind, g);
    require_file(f, "run `eval` first");
    const auto j = read_json_file(f);
    diag::CurveSet c;
    c.type = g.type;
    c.attached = g.attached;
    c.truth = j.at("truth_mm3").get<std::vector<double>>();
    c.predicted = j.at("prediction_mm3").get<std::vector<double>>();
    c.mse = j.at("summary").at("mse_mm6").get<double>();
    curves.push_back(std::move(c));
  }
  return curves;
}

inline void run_diagnose(const RunConfig& cfg, const Log& log) {
  const Paths P{cfg.out};
  require_file(P.manifest(), "run `augment` first");
  const auto m = data::load_manifest(P.manifest());
  const auto thr = cfg.effective_thresholds();
  write_json_file(P.thresholds(), thr);
  nlohmann::json out = nlohmann::json::array();
  for (const auto& c : load_curves(P, m)) {
    std::vector<diag::FaultLabel> pred, truth;
    for (std::size_t i = 0; i < c.truth.size(); ++i) {
      truth.push_back(diag::classify(c.truth[i], thr, c.type));
      pred.push_back(diag::classify(c.predicted[i], thr, c.type));
    }
    const double acc = diag::accuracy(pred, truth);
    std::vector<std::string> labels;
    for (auto l : pred) labels.emplace_back(diag::to_string(l));
    out.push_back({{"type", std::string(1, scan::to_char(c.type))},
                   {"attached", c.attached},
                   {"accuracy_pct", acc},
                   {"predicted_labels", labels}});
    log("diagnose", {{"group", group_tag(c.type, c.attached)}, {"accuracy_pct", str(acc)}});
  }
  write_json_file(P.eval() / "diagnosis.json", out);
}

// --------------------------------------------------------------- report

inline void run_report(const RunConfig& cfg, const Log& log) {
  const Paths P{cfg.out};
  require_file(P.scan_index(), "run `simulate` first");
  const auto timing = read_json_file(P.scan_index()).at("timing");
  diag::TimingInput t;
  t.step_um = timing.at("step_um").get<double>();
  t.regions = timing.at("regions_per_pcb").get<std::size_t>();
  t.scan_seconds = timing.at("scan_seconds_per_pcb").get<double>();
  t.scan_seconds_20um = timing.at("scan_seconds_20um").get<double>();
  t.scan_seconds_50um = timing.at("scan_seconds_50um").get<double>();
  t.prediction_seconds = cfg.prediction_seconds_per_pcb;

  std::vector<diag::CurveSet> curves;
  if (fs::exists(P.manifest())) {
    const auto m = data::load_manifest(P.manifest());
    bool have_all = true;
    for (const Group g : groups_of(m)) have_all = have_all && fs::exists(eval_file(P, "rnet", g));
    if (have_all) curves = load_curves(P, m);
  }
  diag::emit_report(P.reports(), curves, cfg.effective_thresholds(), t);
  const auto s = diag::summarize_timing(t);
  log("report", {{"curves", str(curves.size())},
                 {"step_um", str(t.step_um)},
                 {"total_seconds", str(s.total_seconds)},
                 {"exceeds_limit", s.exceeds_limit ? "1" : "0"},
                 {"ratio_20_50", str(s.ratio_20_50)}});
}

inline void run_pipeline(const RunConfig& cfg, const Log& log) {
  run_simulate(cfg, log);
  run_annotate(cfg, log);
  run_augment(cfg, log);
  run_voxelize(cfg, log);
  run_train(cfg, log);
  run_eval(cfg, log);
  run_diagnose(cfg, log);
  run_report(cfg, log);
}

}  // namespace gluevol::app
