#pragma once

#include <algorithm>
#include <optional>

#include "gluevol/core/error.hpp"
#include "gluevol/geom/cloud_ops.hpp"
#include "gluevol/geom/mesh.hpp"
#include "gluevol/geom/plane.hpp"
#include "gluevol/geom/point_cloud.hpp"
#include "json.hpp"

namespace gluevol::data {

struct AnnotateParams {
  geom::RansacParams ransac;
  double step_um = 20.0;
  /// Volumes below this are reported as an empty deposit.
  double empty_floor = 1e-4;  // mm^3
  /// Margin added around the glue box before cropping, in lattice steps.
  double crop_margin_steps = 2.0;
  /// Height above the substrate that marks glue when no box is given.
  double auto_crop_height = 0.015;  // mm
  geom::LatticeOptions lattice;
};

struct Annotation {
  double volume = 0.0;  // mm^3
  bool empty_glue = false;
  geom::Plane plane;          // substrate, scanner frame
  std::size_t inliers = 0;
  std::size_t cropped_points = 0;
  std::size_t mesh_faces = 0;
  geom::LatticeReport lattice;
};

namespace detail {

/// Maps a scanner-frame XY box onto the plane frame (bounding box of the
/// mapped corners lifted onto the plane).
inline geom::BoundingBox2 box_in_plane_frame(const geom::BoundingBox2& box, const geom::Plane& plane) {
  const geom::PlaneFrame frame(plane);
  geom::BoundingBox2 out{1e300, 1e300, -1e300, -1e300};
  for (double x : {box.min_x, box.max_x})
    for (double y : {box.min_y, box.max_y}) {
      // lift (x, y) vertically onto the plane
      const double z = std::abs(plane.normal.z) > 1e-12
                           ? (plane.offset - plane.normal.x * x - plane.normal.y * y) / plane.normal.z
                           : 0.0;
      const geom::Point3 q = frame.to_local({x, y, z});
      out.min_x = std::min(out.min_x, q.x), out.max_x = std::max(out.max_x, q.x);
      out.min_y = std::min(out.min_y, q.y), out.max_y = std::max(out.max_y, q.y);
    }
  return out;
}

inline geom::BoundingBox2 auto_glue_box(const geom::PointCloud& framed, double height) {
  geom::BoundingBox2 b{1e300, 1e300, -1e300, -1e300};
  for (const auto& p : framed.points)
    if (p.z > height) {
      b.min_x = std::min(b.min_x, p.x), b.max_x = std::max(b.max_x, p.x);
      b.min_y = std::min(b.min_y, p.y), b.max_y = std::max(b.max_y, p.y);
    }
  return b;
}

}  // namespace detail

/// Geometric volume label of an unattached deposit scan: RANSAC substrate
/// fit, plane frame, crop to the glue, close with the substrate projection,
/// lattice triangulation and the projected-facet volume sum.
///
/// `glue_box` is the deposit's XY box in the scanner frame; without it the
/// box is taken from points higher than `auto_crop_height`.
inline Annotation annotate(const geom::PointCloud& cloud, const AnnotateParams& p = {},
                           std::optional<geom::BoundingBox2> glue_box = std::nullopt) {
  const geom::PlaneFit fit = geom::fit_plane_ransac(cloud, p.ransac);
  const geom::PointCloud framed = geom::to_plane_frame(cloud, fit.plane);
  const double step = p.step_um * 1e-3;

  Annotation a;
  a.plane = fit.plane;
  a.inliers = fit.inliers.size();

  geom::BoundingBox2 box;
  if (glue_box) {
    box = detail::box_in_plane_frame(*glue_box, fit.plane);
  } else {
    box = detail::auto_glue_box(framed, p.auto_crop_height);
    if (!box.valid()) {
      a.empty_glue = true;
      return a;
    }
  }
  const double m = p.crop_margin_steps * step;
  box = {box.min_x - m, box.min_y - m, box.max_x + m, box.max_y + m};

  const geom::PointCloud cropped = geom::crop_xy(framed, box);
  const geom::Plane base{{0.0, 0.0, 1.0}, 0.0};
  const geom::PointCloud closed = geom::close_with_projection(cropped, base);
  const geom::TriangleMesh mesh = geom::triangulate_lattice(closed, step, p.lattice, &a.lattice);
  a.cropped_points = cropped.size();
  a.mesh_faces = mesh.faces.size();
  a.volume = mesh.empty() ? 0.0 : geom::mesh_volume_over_plane(mesh, base);
  a.empty_glue = a.volume < p.empty_floor;
  return a;
}

inline void to_json(nlohmann::json& j, const AnnotateParams& p) {
  j = {{"ransac_threshold_mm", p.ransac.inlier_threshold},
       {"ransac_iterations", p.ransac.iterations},
       {"empty_floor_mm3", p.empty_floor},
       {"crop_margin_steps", p.crop_margin_steps},
       {"auto_crop_height_mm", p.auto_crop_height},
       {"snap_fraction", p.lattice.snap_fraction},
       {"merge_warn_mm", p.lattice.merge_warn},
       {"conflict_tolerance_mm", p.lattice.conflict_tolerance}};
}

inline void from_json(const nlohmann::json& j, AnnotateParams& p) {
  p.ransac.inlier_threshold = j.value("ransac_threshold_mm", p.ransac.inlier_threshold);
  p.ransac.iterations = j.value("ransac_iterations", p.ransac.iterations);
  p.empty_floor = j.value("empty_floor_mm3", p.empty_floor);
  p.crop_margin_steps = j.value("crop_margin_steps", p.crop_margin_steps);
  p.auto_crop_height = j.value("auto_crop_height_mm", p.auto_crop_height);
  p.lattice.snap_fraction = j.value("snap_fraction", p.lattice.snap_fraction);
  p.lattice.merge_warn = j.value("merge_warn_mm", p.lattice.merge_warn);
  p.lattice.conflict_tolerance = j.value("conflict_tolerance_mm", p.lattice.conflict_tolerance);
}

}  // namespace gluevol::data
