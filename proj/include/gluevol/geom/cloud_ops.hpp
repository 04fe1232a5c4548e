#pragma once

#include "gluevol/core/error.hpp"
#include "gluevol/geom/plane.hpp"
#include "gluevol/geom/point_cloud.hpp"

namespace gluevol::geom {

/// Keeps the points whose (x, y) lies in the closed box, in input order.
/// Throws EmptyResult when nothing survives.
inline PointCloud crop_xy(const PointCloud& cloud, const BoundingBox2& box) {
  if (!box.valid()) throw Error(ErrorCode::Config, "crop box has min > max");
  PointCloud out;
  out.meta = cloud.meta;
  for (const auto& p : cloud.points)
    if (box.contains(p.x, p.y)) out.points.push_back(p);
  if (out.empty()) throw Error(ErrorCode::EmptyResult, "crop box contains no points");
  return out;
}

/// Appends the projection of every point onto the plane, closing the bottom
/// of the deposit. Output is the input followed by the projections.
inline PointCloud close_with_projection(const PointCloud& cloud, const Plane& plane) {
  if (cloud.empty()) throw Error(ErrorCode::EmptyCloud, "cannot close an empty cloud");
  PointCloud out;
  out.meta = cloud.meta;
  out.points.reserve(2 * cloud.size());
  out.points = cloud.points;
  for (const auto& p : cloud.points) out.points.push_back(plane.project(p));
  return out;
}

}  // namespace gluevol::geom
