#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "gluevol/core/error.hpp"
#include "gluevol/geom/plane.hpp"
#include "gluevol/geom/point_cloud.hpp"

namespace gluevol::geom {

struct TriangleMesh {
  std::vector<Point3> vertices;
  std::vector<std::array<std::uint32_t, 3>> faces;

  bool empty() const { return faces.empty(); }
};

inline double face_area(const TriangleMesh& m, const std::array<std::uint32_t, 3>& f) {
  const Point3& a = m.vertices[f[0]];
  return 0.5 * norm(cross(m.vertices[f[1]] - a, m.vertices[f[2]] - a));
}

inline double surface_area(const TriangleMesh& m) {
  double s = 0.0;
  for (const auto& f : m.faces) s += face_area(m, f);
  return s;
}

struct LatticeOptions {
  /// Max XY distance from a lattice node for a point to snap, as a fraction of the step.
  double snap_fraction = 0.25;
  /// Points snapped to one node are averaged; spreads above this are counted as warnings.
  double merge_warn = 0.002;
  /// Spreads above this are an error.
  double conflict_tolerance = 0.02;
  /// |z| at or below this marks a point as lying on the z = 0 closing plane.
  double plane_epsilon = 1e-9;
};

struct LatticeReport {
  std::size_t covered_points = 0;
  std::size_t skipped_points = 0;
  std::size_t merge_warnings = 0;
  std::size_t top_faces = 0;
  std::size_t bottom_faces = 0;
  double lattice_angle = 0.0;  // radians
};

namespace detail {

/// Lattice orientation from consecutive samples one step apart, averaged on
/// the 4-fold circle so that both scan axes vote for the same angle.
inline double estimate_lattice_angle(const std::vector<Point3>& pts, double step) {
  double c = 0.0, s = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double dx = pts[i].x - pts[i - 1].x;
    const double dy = pts[i].y - pts[i - 1].y;
    const double d = std::hypot(dx, dy);
    if (d < 0.5 * step || d > 1.5 * step) continue;
    const double phi = std::atan2(dy, dx);
    c += std::cos(4.0 * phi);
    s += std::sin(4.0 * phi);
  }
  if (c == 0.0 && s == 0.0) return 0.0;
  return 0.25 * std::atan2(s, c);
}

struct NodeSample {
  std::int64_t i, j;
  double z;
};

}  // namespace detail

/// Triangulates a raster scan expressed in its plane frame (substrate at
/// z = 0). Points are snapped to the scan lattice; every lattice cell whose four
/// corners are present yields two triangles, split along the shorter 3D
/// diagonal. Clouds closed with close_with_projection produce a second,
/// downward-facing sheet at z = 0 for nodes that carry both a surface point
/// and its projection.
inline TriangleMesh triangulate_lattice(const PointCloud& cloud, double step, const LatticeOptions& opt = {},
                                        LatticeReport* report = nullptr) {
  if (cloud.empty()) throw Error(ErrorCode::EmptyCloud, "cannot triangulate an empty cloud");
  if (!(step > 0.0)) throw Error(ErrorCode::Config, "lattice step must be positive");

  const auto& pts = cloud.points;
  const double theta = detail::estimate_lattice_angle(pts, step);
  const double ct = std::cos(theta), st = std::sin(theta);
  const double x0 = pts.front().x, y0 = pts.front().y;
  const double tol = opt.snap_fraction * step;

  LatticeReport rep;
  rep.lattice_angle = theta;
  std::vector<detail::NodeSample> samples;
  samples.reserve(pts.size());
  for (const auto& p : pts) {
    const double dx = p.x - x0, dy = p.y - y0;
    const double u = ct * dx + st * dy;
    const double v = -st * dx + ct * dy;
    const double fi = std::round(u / step), fj = std::round(v / step);
    if (std::abs(u - fi * step) > tol || std::abs(v - fj * step) > tol) {
      ++rep.skipped_points;
      continue;
    }
    samples.push_back({static_cast<std::int64_t>(fi), static_cast<std::int64_t>(fj), p.z});
    ++rep.covered_points;
  }
  std::stable_sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });

  std::int64_t imin = samples.front().i, imax = imin, jmin = samples.front().j, jmax = jmin;
  for (const auto& s : samples) {
    imin = std::min(imin, s.i), imax = std::max(imax, s.i);
    jmin = std::min(jmin, s.j), jmax = std::max(jmax, s.j);
  }
  const std::int64_t ni = imax - imin + 1, nj = jmax - jmin + 1;
  constexpr std::uint32_t kNone = 0xffffffffu;
  std::vector<std::uint32_t> top(static_cast<std::size_t>(ni * nj), kNone);
  std::vector<std::uint32_t> bottom(top.size(), kNone);

  TriangleMesh mesh;
  auto lattice_xy = [&](std::int64_t i, std::int64_t j, double z) {
    const double u = static_cast<double>(i) * step, v = static_cast<double>(j) * step;
    return Point3{x0 + ct * u - st * v, y0 + st * u + ct * v, z};
  };

  for (std::size_t a = 0; a < samples.size();) {
    std::size_t b = a;
    double top_sum = 0.0, top_lo = 0.0, top_hi = 0.0;
    std::size_t top_n = 0, bottom_n = 0;
    for (; b < samples.size() && samples[b].i == samples[a].i && samples[b].j == samples[a].j; ++b) {
      const double z = samples[b].z;
      if (std::abs(z) <= opt.plane_epsilon) {
        ++bottom_n;
        continue;
      }
      if (top_n == 0) top_lo = top_hi = z;
      top_lo = std::min(top_lo, z), top_hi = std::max(top_hi, z);
      top_sum += z;
      ++top_n;
    }
    const auto cell = static_cast<std::size_t>((samples[a].i - imin) * nj + (samples[a].j - jmin));
    if (top_n == 0) {
      // only on-plane points: one vertex serves both sheets
      const auto id = static_cast<std::uint32_t>(mesh.vertices.size());
      mesh.vertices.push_back(lattice_xy(samples[a].i, samples[a].j, 0.0));
      top[cell] = bottom[cell] = id;
    } else {
      const double spread = top_hi - top_lo;
      if (spread > opt.conflict_tolerance)
        throw Error(ErrorCode::InconsistentLattice,
                    "node (" + std::to_string(samples[a].i) + "," + std::to_string(samples[a].j) +
                        ") has z spread " + std::to_string(spread) + " mm");
      if (spread > opt.merge_warn) ++rep.merge_warnings;
      top[cell] = static_cast<std::uint32_t>(mesh.vertices.size());
      mesh.vertices.push_back(lattice_xy(samples[a].i, samples[a].j, top_sum / static_cast<double>(top_n)));
      if (bottom_n > 0) {
        bottom[cell] = static_cast<std::uint32_t>(mesh.vertices.size());
        mesh.vertices.push_back(lattice_xy(samples[a].i, samples[a].j, 0.0));
      }
    }
    a = b;
  }

  auto at = [&](const std::vector<std::uint32_t>& sheet, std::int64_t i, std::int64_t j) {
    return sheet[static_cast<std::size_t>(i * nj + j)];
  };
  auto emit_cell = [&](std::uint32_t v00, std::uint32_t v10, std::uint32_t v11, std::uint32_t v01, bool up) {
    const auto& V = mesh.vertices;
    const double d1 = norm(V[v11] - V[v00]);
    const double d2 = norm(V[v01] - V[v10]);
    std::array<std::uint32_t, 3> f1, f2;
    if (d1 <= d2) {
      f1 = {v00, v10, v11};
      f2 = {v00, v11, v01};
    } else {
      f1 = {v00, v10, v01};
      f2 = {v10, v11, v01};
    }
    if (!up) std::swap(f1[1], f1[2]), std::swap(f2[1], f2[2]);
    mesh.faces.push_back(f1);
    mesh.faces.push_back(f2);
  };

  for (std::int64_t i = 0; i + 1 < ni; ++i) {
    for (std::int64_t j = 0; j + 1 < nj; ++j) {
      const std::uint32_t t00 = at(top, i, j), t10 = at(top, i + 1, j), t11 = at(top, i + 1, j + 1),
                          t01 = at(top, i, j + 1);
      if (t00 != kNone && t10 != kNone && t11 != kNone && t01 != kNone) {
        emit_cell(t00, t10, t11, t01, true);
        rep.top_faces += 2;
      }
      const std::uint32_t b00 = at(bottom, i, j), b10 = at(bottom, i + 1, j), b11 = at(bottom, i + 1, j + 1),
                          b01 = at(bottom, i, j + 1);
      const bool shared = b00 == t00 && b10 == t10 && b11 == t11 && b01 == t01;
      if (b00 != kNone && b10 != kNone && b11 != kNone && b01 != kNone && !shared) {
        emit_cell(b00, b10, b11, b01, false);
        rep.bottom_faces += 2;
      }
    }
  }
  if (report) *report = rep;
  return mesh;
}

enum class NegativeSidePolicy {
  Signed,  // below-plane parts subtract volume
  Clamp,   // vertex distances clamped at zero
  Reject,  // throw NegativeSideVertices
};

inline std::size_t count_negative_side_vertices(const TriangleMesh& mesh, const Plane& plane, double tolerance = 0.0) {
  std::size_t n = 0;
  for (const auto& v : mesh.vertices)
    if (plane.signed_distance(v) < -tolerance) ++n;
  return n;
}

/// Volume between a triangulated surface and a plane: the sum over faces of
/// the projected face area times the distance from the face centroid to the
/// centroid of its projection. Exact for prisms over planar faces.
inline double mesh_volume_over_plane(const TriangleMesh& mesh, const Plane& plane,
                                     NegativeSidePolicy policy = NegativeSidePolicy::Signed) {
  if (mesh.empty()) throw Error(ErrorCode::EmptyMesh, "volume of an empty mesh");
  if (policy == NegativeSidePolicy::Reject) {
    const std::size_t neg = count_negative_side_vertices(mesh, plane);
    if (neg > 0) throw Error(ErrorCode::NegativeSideVertices, std::to_string(neg) + " vertices below the plane");
  }
  double volume = 0.0;
  for (const auto& f : mesh.faces) {
    const Point3& a = mesh.vertices[f[0]];
    const Point3& b = mesh.vertices[f[1]];
    const Point3& c = mesh.vertices[f[2]];
    const double projected_area = 0.5 * std::abs(dot(cross(b - a, c - a), plane.normal));
    double da = plane.signed_distance(a), db = plane.signed_distance(b), dc = plane.signed_distance(c);
    if (policy == NegativeSidePolicy::Clamp) da = std::max(da, 0.0), db = std::max(db, 0.0), dc = std::max(dc, 0.0);
    volume += projected_area * (da + db + dc) / 3.0;
  }
  return volume;
}

}  // namespace gluevol::geom
