#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace gluevol::geom {

/// A point in millimeters.
struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Point3&, const Point3&) = default;

  Point3 operator+(const Point3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Point3 operator-(const Point3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Point3 operator*(double s) const { return {x * s, y * s, z * s}; }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline double dot(const Point3& a, const Point3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Point3 cross(const Point3& a, const Point3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Point3& a) { return std::sqrt(dot(a, a)); }

/// Provenance carried alongside a scan.
struct CloudMeta {
  int region_id = -1;
  char glue_type = '?';
  double step_um = 0.0;
  int pass = 0;

  friend bool operator==(const CloudMeta&, const CloudMeta&) = default;
};

/// Points in acquisition order.
struct PointCloud {
  std::vector<Point3> points;
  std::optional<CloudMeta> meta;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Axis-aligned XY rectangle in mm, closed on all sides.
struct BoundingBox2 {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;

  friend bool operator==(const BoundingBox2&, const BoundingBox2&) = default;

  bool valid() const { return min_x <= max_x && min_y <= max_y; }
  double width() const { return max_x - min_x; }
  double height() const { return max_y - min_y; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (min_x + max_x); }
  double center_y() const { return 0.5 * (min_y + max_y); }
  bool contains(double x, double y) const {
    return x >= min_x && x <= max_x && y >= min_y && y <= max_y;
  }
  bool contains(const BoundingBox2& o) const {
    return o.min_x >= min_x && o.max_x <= max_x && o.min_y >= min_y && o.max_y <= max_y;
  }
};

/// Componentwise extent of a cloud.
struct Extent3 {
  Point3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
            std::numeric_limits<double>::infinity()};
  Point3 hi{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
            -std::numeric_limits<double>::infinity()};

  double range_x() const { return hi.x - lo.x; }
  double range_y() const { return hi.y - lo.y; }
  double range_z() const { return hi.z - lo.z; }
  BoundingBox2 xy() const { return {lo.x, lo.y, hi.x, hi.y}; }
};

inline Extent3 extent(const PointCloud& cloud) {
  Extent3 e;
  for (const auto& p : cloud.points) {
    e.lo.x = std::min(e.lo.x, p.x);
    e.lo.y = std::min(e.lo.y, p.y);
    e.lo.z = std::min(e.lo.z, p.z);
    e.hi.x = std::max(e.hi.x, p.x);
    e.hi.y = std::max(e.hi.y, p.y);
    e.hi.z = std::max(e.hi.z, p.z);
  }
  return e;
}

}  // namespace gluevol::geom
