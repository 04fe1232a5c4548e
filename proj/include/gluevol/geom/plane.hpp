#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "gluevol/core/error.hpp"
#include "gluevol/core/rng.hpp"
#include "gluevol/geom/point_cloud.hpp"

namespace gluevol::geom {

/// The plane { p : normal . p = offset } with a unit normal.
struct Plane {
  Point3 normal{0.0, 0.0, 1.0};
  double offset = 0.0;

  double signed_distance(const Point3& p) const { return dot(normal, p) - offset; }
  Point3 project(const Point3& p) const { return p - normal * signed_distance(p); }
};

struct RansacParams {
  double inlier_threshold = 0.005;  // mm
  int iterations = 500;
  std::uint64_t seed = 0;
  /// Robust refinement rounds; 0 gives a single least-squares fit over all inliers.
  int refine_rounds = 4;
};

struct PlaneFit {
  Plane plane;
  std::vector<std::size_t> inliers;
};

namespace detail {

inline bool plane_through(const Point3& a, const Point3& b, const Point3& c, Plane& out) {
  const Point3 u = b - a;
  const Point3 v = c - a;
  const Point3 n = cross(u, v);
  const double len = norm(n);
  const double scale = std::max(dot(u, u), dot(v, v));
  if (!(len > 1e-12 * scale) || len == 0.0) return false;
  out.normal = n * (1.0 / len);
  out.offset = dot(out.normal, a);
  return true;
}

inline std::size_t count_inliers(const std::vector<Point3>& pts, const Plane& pl, double thr) {
  std::size_t n = 0;
  for (const auto& p : pts)
    if (std::abs(pl.signed_distance(p)) <= thr) ++n;
  return n;
}

/// Total least squares plane through the selected points.
inline Plane least_squares_plane(const std::vector<Point3>& pts, const std::vector<std::size_t>& idx) {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (std::size_t i : idx) c += Eigen::Vector3d(pts[i].x, pts[i].y, pts[i].z);
  c /= static_cast<double>(idx.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (std::size_t i : idx) {
    const Eigen::Vector3d d = Eigen::Vector3d(pts[i].x, pts[i].y, pts[i].z) - c;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  const Eigen::Vector3d n = es.eigenvectors().col(0).normalized();
  Plane pl;
  pl.normal = {n.x(), n.y(), n.z()};
  pl.offset = n.dot(c);
  return pl;
}

/// Finds a non-collinear triple or throws DegenerateCloud.
inline void require_non_collinear(const std::vector<Point3>& pts) {
  const Point3& p0 = pts.front();
  std::size_t far = 0;
  double best = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double d = dot(pts[i] - p0, pts[i] - p0);
    if (d > best) best = d, far = i;
  }
  if (best == 0.0) throw Error(ErrorCode::DegenerateCloud, "all points coincide");
  const Point3 axis = pts[far] - p0;
  double area = 0.0;
  for (const auto& p : pts) area = std::max(area, norm(cross(axis, p - p0)));
  if (area <= 1e-12 * best) throw Error(ErrorCode::DegenerateCloud, "all points are collinear");
}

inline double median_inplace(std::vector<double>& v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

/// Least-squares refinement over the threshold inliers. Each round drops
/// inliers whose residual is more than 3 robust sigmas (1.4826 * MAD) from
/// the median residual, which removes one-sided contamination such as the
/// thin rim of a deposit lying inside the threshold band.
inline Plane refine_trimmed(const std::vector<Point3>& pts, const Plane& start, double thr, int rounds) {
  Plane plane = start;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (std::abs(plane.signed_distance(pts[i])) <= thr) idx.push_back(i);
  if (idx.size() < 3) return plane;
  plane = least_squares_plane(pts, idx);
  std::vector<double> r, dev;
  for (int round = 0; round < rounds; ++round) {
    idx.clear();
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (std::abs(plane.signed_distance(pts[i])) <= thr) idx.push_back(i);
    if (idx.size() < 3) break;
    r.clear();
    for (std::size_t i : idx) r.push_back(plane.signed_distance(pts[i]));
    dev = r;
    const double med = median_inplace(dev);
    for (auto& d : dev) d = std::abs(d - med);
    const double cut = std::max(3.0 * 1.4826 * median_inplace(dev), 1e-12);
    std::vector<std::size_t> kept;
    for (std::size_t k = 0; k < idx.size(); ++k)
      if (std::abs(r[k] - med) <= cut) kept.push_back(idx[k]);
    if (kept.size() < 3) break;
    const Plane next = least_squares_plane(pts, kept);
    const bool done = kept.size() == idx.size();
    plane = next;
    if (done) break;
  }
  return plane;
}

inline void orient_towards_outliers(const std::vector<Point3>& pts, Plane& pl, double thr) {
  double outlier_sum = 0.0;
  for (const auto& p : pts) {
    const double s = pl.signed_distance(p);
    if (std::abs(s) > thr) outlier_sum += s;
  }
  bool flip = outlier_sum < 0.0;
  if (outlier_sum == 0.0) {
    // no evidence from the deposit: face world +Z
    flip = pl.normal.z < 0.0 || (pl.normal.z == 0.0 && (pl.normal.y < 0.0 || (pl.normal.y == 0.0 && pl.normal.x < 0.0)));
  }
  if (flip) {
    pl.normal = pl.normal * -1.0;
    pl.offset = -pl.offset;
  }
}

}  // namespace detail

/// RANSAC substrate fit: the 3-point hypothesis with the most inliers wins
/// (first one on ties), then it is refined by a least-squares fit over its
/// inliers. The returned inliers are those of the refined plane.
inline PlaneFit fit_plane_ransac(const PointCloud& cloud, const RansacParams& params = {}) {
  const auto& pts = cloud.points;
  if (pts.size() < 3)
    throw Error(ErrorCode::FewerThanThreePoints, "plane fit needs at least 3 points, got " + std::to_string(pts.size()));
  if (!(params.inlier_threshold > 0.0))
    throw Error(ErrorCode::Config, "inlier threshold must be positive");
  detail::require_non_collinear(pts);

  Rng rng(params.seed);
  std::uniform_int_distribution<std::size_t> pick(0, pts.size() - 1);
  Plane best;
  std::size_t best_count = 0;
  bool have = false;
  for (int it = 0; it < params.iterations; ++it) {
    const std::size_t a = pick(rng);
    std::size_t b = pick(rng);
    std::size_t c = pick(rng);
    if (a == b || b == c || a == c) continue;
    Plane h;
    if (!detail::plane_through(pts[a], pts[b], pts[c], h)) continue;
    const std::size_t n = detail::count_inliers(pts, h, params.inlier_threshold);
    if (!have || n > best_count) {
      best = h;
      best_count = n;
      have = true;
    }
  }
  if (!have || best_count < 3) {
    // Every hypothesis was degenerate; fall back to all points.
    std::vector<std::size_t> all(pts.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    best = detail::least_squares_plane(pts, all);
  }

  Plane refined = detail::refine_trimmed(pts, best, params.inlier_threshold, params.refine_rounds);
  detail::orient_towards_outliers(pts, refined, params.inlier_threshold);

  PlaneFit fit{refined, {}};
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (std::abs(refined.signed_distance(pts[i])) <= params.inlier_threshold) fit.inliers.push_back(i);
  return fit;
}

/// Orthonormal frame whose XY plane is the given plane. X is the world X axis
/// projected onto the plane (world Y when X is nearly normal to it).
struct PlaneFrame {
  Point3 origin;
  Point3 ex, ey, ez;

  explicit PlaneFrame(const Plane& plane) : ez(plane.normal) {
    origin = plane.normal * plane.offset;
    Point3 axis{1.0, 0.0, 0.0};
    Point3 px = axis - ez * dot(axis, ez);
    if (norm(px) < 1e-6) {
      axis = {0.0, 1.0, 0.0};
      px = axis - ez * dot(axis, ez);
    }
    ex = px * (1.0 / norm(px));
    ey = cross(ez, ex);
  }

  Point3 to_local(const Point3& p) const {
    const Point3 d = p - origin;
    return {dot(ex, d), dot(ey, d), dot(ez, d)};
  }
  Point3 to_world(const Point3& q) const { return origin + ex * q.x + ey * q.y + ez * q.z; }
};

/// Rigidly maps the cloud so that the plane becomes z = 0 and z is the signed
/// distance to it.
inline PointCloud to_plane_frame(const PointCloud& cloud, const Plane& plane) {
  const PlaneFrame frame(plane);
  PointCloud out;
  out.meta = cloud.meta;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(frame.to_local(p));
  return out;
}

}  // namespace gluevol::geom
