#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "gluevol/core/error.hpp"
#include "gluevol/core/rng.hpp"
#include "gluevol/geom/cloud_ops.hpp"
#include "gluevol/geom/point_cloud.hpp"
#include "json.hpp"

namespace gluevol::data {

struct AugmentParams {
  double window_fraction = 0.92;
  double shift_fraction = 0.02;
  double min_step_um = 20.0;  // smallest linear-stage move
  std::vector<double> noise_levels{0.0, 0.03, 0.06, 0.09};  // sigma as a fraction of the z range
  std::uint64_t seed = 0;

  void validate() const {
    if (!(window_fraction > 0.0 && window_fraction < 1.0))
      throw Error(ErrorCode::Config, "window fraction must lie in (0, 1)");
    if (!(shift_fraction > 0.0)) throw Error(ErrorCode::Config, "shift fraction must be positive");
    if (!(min_step_um > 0.0)) throw Error(ErrorCode::Config, "min step must be positive");
    if (noise_levels.empty()) throw Error(ErrorCode::Config, "need at least one noise level");
    for (std::size_t i = 0; i < noise_levels.size(); ++i) {
      if (noise_levels[i] < 0.0) throw Error(ErrorCode::Config, "noise levels must be non-negative");
      if (i > 0 && !(noise_levels[i] > noise_levels[i - 1]))
        throw Error(ErrorCode::Config, "noise levels must be increasing");
    }
  }
};

/// Window placement along one axis.
struct AxisPlan {
  double range = 0.0;
  double window = 0.0;  // window_fraction * range
  double shift = 0.0;   // max(shift_fraction * range, min_step)
  int positions = 1;    // floor(slack / shift) + 1
  double first_offset = 0.0;  // windows are centred in the slack
};

inline constexpr double kPositionTolerance = 1e-4;

inline AxisPlan plan_axis(double range, const AugmentParams& p) {
  AxisPlan a;
  a.range = range;
  a.window = p.window_fraction * range;
  a.shift = std::max(p.shift_fraction * range, p.min_step_um * 1e-3);
  const double slack = range - a.window;
  // The tolerance keeps e.g. 0.16 / 0.04 from flooring to 3, and absorbs
  // the few-nm stage jitter in measured ranges when slack / shift is whole.
  a.positions = static_cast<int>(std::floor(slack / a.shift + kPositionTolerance)) + 1;
  a.first_offset = 0.5 * (slack - (a.positions - 1) * a.shift);
  return a;
}

/// Number of clouds augment() emits for a scan with the given XY ranges.
inline std::size_t augment_count(double range_x, double range_y, const AugmentParams& p) {
  return static_cast<std::size_t>(plan_axis(range_x, p).positions) *
         static_cast<std::size_t>(plan_axis(range_y, p).positions) * p.noise_levels.size();
}

struct AugmentedCloud {
  geom::PointCloud cloud;
  int crop_index = 0;  // ix * positions_y + iy
  int crop_x = 0, crop_y = 0;
  int noise_index = 0;
  double noise_level = 0.0;
  double noise_sigma = 0.0;  // mm
  geom::BoundingBox2 window;
};

/// Shifted crop windows emulating scanner mis-localisation, each emitted at
/// every noise level with Gaussian z noise of sigma = level * z range.
/// Input must be in its plane frame. Output order: crop-major, then level.
inline std::vector<AugmentedCloud> augment(const geom::PointCloud& cloud, const AugmentParams& p) {
  p.validate();
  if (cloud.empty()) throw Error(ErrorCode::EmptyCloud, "cannot augment an empty cloud");
  const geom::Extent3 e = geom::extent(cloud);
  const AxisPlan ax = plan_axis(e.range_x(), p);
  const AxisPlan ay = plan_axis(e.range_y(), p);
  const double z_range = e.range_z();

  std::vector<AugmentedCloud> out;
  out.reserve(static_cast<std::size_t>(ax.positions * ay.positions) * p.noise_levels.size());
  for (int ix = 0; ix < ax.positions; ++ix) {
    for (int iy = 0; iy < ay.positions; ++iy) {
      const double x0 = e.lo.x + ax.first_offset + ix * ax.shift;
      const double y0 = e.lo.y + ay.first_offset + iy * ay.shift;
      const geom::BoundingBox2 win{x0, y0, std::min(x0 + ax.window, e.hi.x), std::min(y0 + ay.window, e.hi.y)};
      const geom::PointCloud crop = geom::crop_xy(cloud, win);
      const int crop_index = ix * ay.positions + iy;
      for (std::size_t li = 0; li < p.noise_levels.size(); ++li) {
        AugmentedCloud a;
        a.crop_index = crop_index;
        a.crop_x = ix, a.crop_y = iy;
        a.noise_index = static_cast<int>(li);
        a.noise_level = p.noise_levels[li];
        a.noise_sigma = p.noise_levels[li] * z_range;
        a.window = win;
        a.cloud = crop;
        if (a.noise_sigma > 0.0) {
          Rng rng(derive_seed(p.seed, {static_cast<std::uint64_t>(crop_index), li}));
          std::normal_distribution<double> gauss(0.0, a.noise_sigma);
          for (auto& q : a.cloud.points) q.z += gauss(rng);
        }
        out.push_back(std::move(a));
      }
    }
  }
  return out;
}

inline void to_json(nlohmann::json& j, const AugmentParams& p) {
  j = {{"window_fraction", p.window_fraction},
       {"shift_fraction", p.shift_fraction},
       {"min_step_um", p.min_step_um},
       {"noise_levels", p.noise_levels}};
}

inline void from_json(const nlohmann::json& j, AugmentParams& p) {
  p.window_fraction = j.value("window_fraction", p.window_fraction);
  p.shift_fraction = j.value("shift_fraction", p.shift_fraction);
  p.min_step_um = j.value("min_step_um", p.min_step_um);
  if (j.contains("noise_levels")) p.noise_levels = j.at("noise_levels").get<std::vector<double>>();
}

}  // namespace gluevol::data
