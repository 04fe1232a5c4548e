#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "gluevol/app/pipeline.hpp"

namespace {

using gluevol::ErrorCode;

int exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::Config:
    case ErrorCode::BadLayoutConfig:
    case ErrorCode::UnknownType:
      return 2;
    case ErrorCode::MissingInput:
      return 3;
    case ErrorCode::NumericFailure:
      return 4;
    default:
      return 1;
  }
}

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> step;
  std::optional<std::string> profile;
  std::optional<unsigned> threads;
  std::optional<std::string> out;
  bool quiet = false;
  bool any_step = false;
};

gluevol::app::RunConfig resolve(const Flags& f) {
  using namespace gluevol::app;
  nlohmann::json file;
  if (!f.config.empty()) file = read_json_file(f.config);
  std::string profile = "paper";
  if (file.contains("run") && file["run"].contains("profile")) profile = file["run"]["profile"].get<std::string>();
  if (f.profile) profile = *f.profile;
  RunConfig cfg = make_profile(profile_from_string(profile));
  if (!file.is_null()) apply_json(cfg, file);
  if (f.seed) cfg.seed = *f.seed;
  if (f.step) cfg.step_um = *f.step;
  if (f.threads) cfg.threads = *f.threads;
  if (f.out) cfg.out = *f.out;
  cfg.quiet = f.quiet;
  cfg.allow_any_step = f.any_step;
  cfg.sync();
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Glue deposit inspection: scan simulation, volume annotation, 3D CNN volume regression and fault diagnosis"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "JSON config file with per-module sections")->check(CLI::ExistingFile);
  app.add_option("--seed", f.seed, "global seed");
  app.add_option("--step", f.step, "scan step in micrometers (20 or 50)");
  app.add_option("--profile", f.profile, "paper or tiny")->check(CLI::IsMember({"paper", "tiny"}));
  app.add_option("--threads", f.threads, "worker threads (1 = deterministic reference mode)")->check(CLI::PositiveNumber);
  app.add_option("--out", f.out, "output directory");
  app.add_flag("--quiet", f.quiet, "suppress log lines");
  app.add_flag("--any-step", f.any_step, "allow steps other than 20 and 50 um");

  using Stage = void (*)(const gluevol::app::RunConfig&, const gluevol::app::Log&);
  const std::vector<std::tuple<std::string, std::string, Stage>> stages{
      {"simulate", "simulate boards and raster scans", [](auto& c, auto& l) { gluevol::app::run_simulate(c, l); }},
      {"annotate", "fit substrate planes and annotate unattached volumes", gluevol::app::run_annotate},
      {"augment", "crop/noise augmentation, labels and manifest", [](auto& c, auto& l) { gluevol::app::run_augment(c, l); }},
      {"voxelize", "occupancy grids for every sample", gluevol::app::run_voxelize},
      {"train", "train one network per glue type and attachment state", gluevol::app::run_train},
      {"eval", "evaluate trained networks on the test split", [](auto& c, auto& l) { gluevol::app::run_eval(c, l); }},
      {"diagnose", "classify predicted volumes against thresholds", gluevol::app::run_diagnose},
      {"report", "curves, confusion matrix and timing summary", gluevol::app::run_report},
      {"pipeline", "run every stage in order", gluevol::app::run_pipeline},
  };
  Stage chosen = nullptr;
  for (const auto& [name, help, fn] : stages) {
    auto* sub = app.add_subcommand(name, help);
    sub->callback([&chosen, fn = fn] { chosen = fn; });
  }
  bool print_defaults = false;
  auto* config_cmd = app.add_subcommand("config", "show the effective configuration");
  config_cmd->add_flag("--print-defaults", print_defaults, "print the documented defaults as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const auto cfg = resolve(f);
    if (config_cmd->parsed()) {
      std::cout << gluevol::app::to_json(cfg).dump(2) << '\n';
      return 0;
    }
    const gluevol::app::Log log(cfg.quiet);
    chosen(cfg, log);
    return 0;
  } catch (const gluevol::Error& e) {
    std::cerr << "error=" << gluevol::to_string(e.code()) << " message=\"" << e.what() << "\"\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error=Internal message=\"" << e.what() << "\"\n";
    return 1;
  }
}
