#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "gluevol/core/error.hpp"
#include "gluevol/core/rng.hpp"
#include "gluevol/geom/point_cloud.hpp"
#include "gluevol/scan/pcb.hpp"
#include "gluevol/scan/region.hpp"
#include "json.hpp"

namespace gluevol::scan {

struct ScanConfig {
  double step_um = 20.0;
  double stage_speed = 20.0;           // mm/s, y stage during a line
  double noise_sigma_z = 0.0005;       // mm, sensor height noise
  double stage_uncertainty = 5e-6;     // mm, xy jitter (5 nm)
  double pco_delay = 50e-9;            // s, trigger latency; shows up as a lag along the line
  double x_turnaround_overhead = 0.1;  // s, per line change
  double region_overhead = 0.5;        // s, repositioning between regions
  int passes = 5;
  std::uint64_t seed = 0;

  double step_mm() const { return step_um * 1e-3; }
  void validate() const {
    if (!(step_um > 0.0)) throw Error(ErrorCode::Config, "scan step must be positive");
    if (!(stage_speed > 0.0) || stage_speed > 100.0)
      throw Error(ErrorCode::Config, "stage speed must lie in (0, 100] mm/s");
    if (noise_sigma_z < 0.0 || stage_uncertainty < 0.0) throw Error(ErrorCode::Config, "negative noise");
    if (passes < 1) throw Error(ErrorCode::Config, "need at least one scan pass");
  }
};

namespace detail {
/// floor(a / b) that does not lose a whole unit to rounding (1.8 / 0.05).
inline long whole_steps(double a, double b) { return static_cast<long>(std::floor(a / b + 1e-9)); }
}  // namespace detail

/// Trigger positions along one line: k * step for k = 1 .. floor(range / step).
/// An empty result means the range is shorter than one step.
inline std::vector<double> pulse_schedule(double range_mm, double step_um) {
  if (!(range_mm > 0.0)) throw Error(ErrorCode::NonPositiveRange, "pulse range must be positive");
  if (!(step_um > 0.0)) throw Error(ErrorCode::Config, "pulse step must be positive");
  const double step = step_um * 1e-3;
  const long n = detail::whole_steps(range_mm, step);
  std::vector<double> pos(static_cast<std::size_t>(std::max(0L, n)));
  for (long k = 1; k <= n; ++k) pos[static_cast<std::size_t>(k - 1)] = static_cast<double>(k) * step;
  return pos;
}

struct RasterGeometry {
  long lines = 0;
  long pulses = 0;
  double y_travel = 0.0;  // mm per line
};

inline RasterGeometry raster_geometry(const RegionSpec& r, double step_um) {
  const double step = step_um * 1e-3;
  RasterGeometry g;
  g.lines = detail::whole_steps(r.footprint.width(), step) + 1;
  g.pulses = detail::whole_steps(r.footprint.height(), step);
  g.y_travel = static_cast<double>(g.pulses) * step;
  return g;
}

/// Zig-zag raster scan of one region: X advances one step per line, Y is
/// sampled at the pulse positions, alternating direction every line.
inline geom::PointCloud raster_scan(const RegionSpec& region, const ScanConfig& cfg, int pass = 0) {
  cfg.validate();
  const double step = cfg.step_mm();
  const RasterGeometry g = raster_geometry(region, cfg.step_um);
  const std::vector<double> pulses =
      region.footprint.height() > 0.0 ? pulse_schedule(region.footprint.height(), cfg.step_um) : std::vector<double>{};

  Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(region.id), static_cast<std::uint64_t>(pass)}));
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double lag = cfg.pco_delay * cfg.stage_speed;

  geom::PointCloud cloud;
  cloud.meta = geom::CloudMeta{region.id, to_char(region.glue_type), cfg.step_um, pass};
  cloud.points.reserve(static_cast<std::size_t>(g.lines) * pulses.size());
  for (long line = 0; line < g.lines; ++line) {
    const double x = std::min(region.footprint.max_x, region.footprint.min_x + static_cast<double>(line) * step);
    const bool forward = line % 2 == 0;
    for (std::size_t k = 0; k < pulses.size(); ++k) {
      const double y = std::min(region.footprint.max_y, region.footprint.min_y + pulses[forward ? k : pulses.size() - 1 - k]);
      // Noise is drawn for every sample, even when its sigma is zero, so that
      // the stream layout does not depend on the configuration.
      const double jx = gauss(rng), jy = gauss(rng), jz = gauss(rng);
      const double z = surface_height(region, x, y) + substrate_height(region, x, y) + cfg.noise_sigma_z * jz;
      const double ry = y + (forward ? lag : -lag) + cfg.stage_uncertainty * jy;
      cloud.points.push_back({x + cfg.stage_uncertainty * jx, ry, z});
    }
  }
  return cloud;
}

/// Acquisition time for a set of regions: lines * (y travel / speed) plus a
/// turnaround between lines and a repositioning overhead per region.
inline double scan_time_estimate(std::span<const RegionSpec> regions, const ScanConfig& cfg) {
  cfg.validate();
  double t = 0.0;
  for (const auto& r : regions) {
    const RasterGeometry g = raster_geometry(r, cfg.step_um);
    t += static_cast<double>(g.lines) * g.y_travel / cfg.stage_speed +
         static_cast<double>(g.lines - 1) * cfg.x_turnaround_overhead + cfg.region_overhead;
  }
  return t;
}

inline std::vector<RegionSpec> all_regions(const PcbModel& pcb) {
  std::vector<RegionSpec> out;
  for (const auto& c : pcb.circuits) out.insert(out.end(), c.regions.begin(), c.regions.end());
  return out;
}

inline void to_json(nlohmann::json& j, const ScanConfig& c) {
  j = {{"step_um", c.step_um},
       {"stage_speed_mm_s", c.stage_speed},
       {"noise_sigma_z_mm", c.noise_sigma_z},
       {"stage_uncertainty_mm", c.stage_uncertainty},
       {"pco_delay_s", c.pco_delay},
       {"x_turnaround_overhead_s", c.x_turnaround_overhead},
       {"region_overhead_s", c.region_overhead},
       {"passes", c.passes}};
}

inline void from_json(const nlohmann::json& j, ScanConfig& c) {
  c.step_um = j.value("step_um", c.step_um);
  c.stage_speed = j.value("stage_speed_mm_s", c.stage_speed);
  c.noise_sigma_z = j.value("noise_sigma_z_mm", c.noise_sigma_z);
  c.stage_uncertainty = j.value("stage_uncertainty_mm", c.stage_uncertainty);
  c.pco_delay = j.value("pco_delay_s", c.pco_delay);
  c.x_turnaround_overhead = j.value("x_turnaround_overhead_s", c.x_turnaround_overhead);
  c.region_overhead = j.value("region_overhead_s", c.region_overhead);
  c.passes = j.value("passes", c.passes);
}

}  // namespace gluevol::scan
