#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>

#include "gluevol/core/error.hpp"
#include "gluevol/geom/point_cloud.hpp"

namespace gluevol::scan {

enum class GlueType { A, B, C, D, E };

inline constexpr std::array<GlueType, 5> kAllGlueTypes{GlueType::A, GlueType::B, GlueType::C, GlueType::D, GlueType::E};

constexpr char to_char(GlueType t) { return static_cast<char>('A' + static_cast<int>(t)); }
constexpr int index_of(GlueType t) { return static_cast<int>(t); }

inline GlueType glue_type_from_char(char c) {
  if (c >= 'a' && c <= 'e') c = static_cast<char>(c - 'a' + 'A');
  if (c < 'A' || c > 'E') throw Error(ErrorCode::UnknownType, std::string("glue type '") + c + "'");
  return static_cast<GlueType>(c - 'A');
}

enum class CapProfile {
  RaisedCosine,  // (1 + cos(pi * r^flatness)) / 2, meets the board tangentially
  SphericalCap,  // sphere segment, finite contact angle
};

/// Parametric deposit shape. The deposit occupies a superellipse centred in the
/// region footprint; its profile is a cap in the superellipse radius,
/// modulated by a Gaussian bump where dispensing ended.
struct GlueShape {
  CapProfile profile = CapProfile::RaisedCosine;
  double extent_x = 0.6;          // superellipse semi-axis / footprint half-width
  double extent_y = 0.8;          // same along y
  double exponent = 4.0;          // superellipse exponent
  double flatness = 2.0;          // radius exponent inside the cosine; > 1 flattens the top
  double bump_amplitude = 0.25;   // relative height gain at the bump centre
  double bump_position = 0.6;     // bump centre along +y, fraction of the y semi-axis
  double bump_sigma = 0.12;       // mm
  double curvature_radius = 1.5;  // SphericalCap sphere radius in semi-axis units, > 1

  friend bool operator==(const GlueShape&, const GlueShape&) = default;
};

struct DieSpec {
  double width = 0.45;          // mm, along x
  double length = 1.2;          // mm, along y
  double thickness = 0.1;       // mm
  double squeeze_ratio = 0.85;  // share of the glue that ends up under the die
  double fillet_width = 0.06;   // mm, outward reach of the fillet bead
  double offset_x = 0.0;        // placement error of the die centre, mm
  double offset_y = 0.0;

  friend bool operator==(const DieSpec&, const DieSpec&) = default;
  double area() const { return width * length; }
  double perimeter() const { return 2.0 * (width + length); }
};

/// Small tilt/offset of the board under the scanner.
struct SubstratePose {
  double tilt_x = 0.0;  // dz/dx
  double tilt_y = 0.0;  // dz/dy
  double z_offset = 0.0;

  friend bool operator==(const SubstratePose&, const SubstratePose&) = default;
};

struct RegionSpec {
  GlueType glue_type = GlueType::A;
  geom::BoundingBox2 footprint{0.0, 0.0, 1.0, 1.8};
  GlueShape shape;
  double dispensed_volume = 0.0;  // mm^3
  bool attached = false;
  std::optional<DieSpec> die;
  SubstratePose substrate;

  // Placement on the board; -1 when the region is free-standing.
  int pcb = -1, row = -1, column = -1, deposit = -1;
  int id = 0;

  /// Integral of the unit-scale shape over the footprint; set by make_region.
  double shape_integral = 0.0;

  friend bool operator==(const RegionSpec&, const RegionSpec&) = default;

  double glue_semi_x() const { return shape.extent_x * 0.5 * footprint.width(); }
  double glue_semi_y() const { return shape.extent_y * 0.5 * footprint.height(); }
  geom::BoundingBox2 glue_box() const {
    const double cx = footprint.center_x(), cy = footprint.center_y();
    return {cx - glue_semi_x(), cy - glue_semi_y(), cx + glue_semi_x(), cy + glue_semi_y()};
  }
  geom::BoundingBox2 die_box() const {
    const DieSpec& d = die.value();
    const double cx = footprint.center_x() + d.offset_x, cy = footprint.center_y() + d.offset_y;
    return {cx - 0.5 * d.width, cy - 0.5 * d.length, cx + 0.5 * d.width, cy + 0.5 * d.length};
  }
  std::string name() const {
    return "pcb" + std::to_string(pcb) + "_c" + std::to_string(row) + std::to_string(column) + "_t" +
           std::string(1, to_char(glue_type)) + "_d" + std::to_string(deposit);
  }
};

namespace detail {

/// Unit-scale deposit profile, zero outside the superellipse.
inline double unit_shape(const RegionSpec& r, double x, double y) {
  const double a = r.glue_semi_x(), b = r.glue_semi_y();
  const double cx = r.footprint.center_x(), cy = r.footprint.center_y();
  const double lx = std::abs(x - cx) / a, ly = std::abs(y - cy) / b;
  if (lx >= 1.0 || ly >= 1.0) return 0.0;
  const double n = r.shape.exponent;
  const double rn = std::pow(lx, n) + std::pow(ly, n);
  if (rn >= 1.0) return 0.0;
  double cap;
  if (r.shape.profile == CapProfile::SphericalCap) {
    const double R = r.shape.curvature_radius;
    const double rho2 = std::pow(rn, 2.0 / n);
    const double c = std::sqrt(R * R - 1.0);
    cap = (std::sqrt(R * R - rho2) - c) / (R - c);
  } else {
    const double t = std::pow(rn, r.shape.flatness / n);  // radius^flatness
    cap = 0.5 * (1.0 + std::cos(std::numbers::pi * t));
  }
  const double by = cy + r.shape.bump_position * b;
  const double s2 = r.shape.bump_sigma * r.shape.bump_sigma;
  const double d2 = (x - cx) * (x - cx) + (y - by) * (y - by);
  return cap * (1.0 + r.shape.bump_amplitude * std::exp(-0.5 * d2 / s2));
}

/// Composite 4-point Gauss-Legendre over the glue bounding box.
inline double integrate_unit_shape(const RegionSpec& r, int panels = 240) {
  static constexpr double xg[4] = {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563, 0.8611363115940526};
  static constexpr double wg[4] = {0.3478548451374538, 0.6521451548625461, 0.6521451548625461, 0.3478548451374538};
  const geom::BoundingBox2 box = r.glue_box();
  const double hx = box.width() / panels, hy = box.height() / panels;
  double total = 0.0;
  for (int pi = 0; pi < panels; ++pi) {
    for (int qi = 0; qi < 4; ++qi) {
      const double x = box.min_x + hx * (pi + 0.5 + 0.5 * xg[qi]);
      double col = 0.0;
      for (int pj = 0; pj < panels; ++pj)
        for (int qj = 0; qj < 4; ++qj) {
          const double y = box.min_y + hy * (pj + 0.5 + 0.5 * xg[qj]);
          col += wg[qj] * unit_shape(r, x, y);
        }
      total += wg[qi] * col;
    }
  }
  return total * 0.25 * hx * hy;
}

/// Height profile of the fillet at distance t outside the die edge.
inline double fillet_profile(double t, double width) {
  if (t <= 0.0 || t >= width) return 0.0;
  const double s = 1.0 - t / width;
  return s * s;
}

inline double distance_to_box(const geom::BoundingBox2& b, double x, double y) {
  const double dx = std::max({b.min_x - x, 0.0, x - b.max_x});
  const double dy = std::max({b.min_y - y, 0.0, y - b.max_y});
  return std::hypot(dx, dy);
}

}  // namespace detail

/// Builds a free-standing region and caches its shape integral.
inline RegionSpec make_region(GlueType type, const geom::BoundingBox2& footprint, const GlueShape& shape,
                              double dispensed_volume) {
  if (!footprint.valid() || footprint.area() <= 0.0) throw Error(ErrorCode::BadLayoutConfig, "empty footprint");
  if (dispensed_volume < 0.0) throw Error(ErrorCode::BadLayoutConfig, "negative dispensed volume");
  if (shape.extent_x <= 0.0 || shape.extent_x > 1.0 || shape.extent_y <= 0.0 || shape.extent_y > 1.0)
    throw Error(ErrorCode::BadLayoutConfig, "glue extent must lie in (0, 1]");
  if (shape.exponent <= 0.0 || shape.flatness <= 0.0 || shape.bump_sigma <= 0.0)
    throw Error(ErrorCode::BadLayoutConfig, "shape exponents and bump sigma must be positive");
  if (shape.profile == CapProfile::SphericalCap && !(shape.curvature_radius > 1.0))
    throw Error(ErrorCode::BadLayoutConfig, "spherical cap needs curvature radius > 1");
  RegionSpec r;
  r.glue_type = type;
  r.footprint = footprint;
  r.shape = shape;
  r.dispensed_volume = dispensed_volume;
  r.shape_integral = detail::integrate_unit_shape(r);
  return r;
}

/// Height of the dispensed (pre-attachment) deposit above the substrate.
inline double glue_height(const RegionSpec& r, double x, double y) {
  if (!r.footprint.contains(x, y)) throw Error(ErrorCode::OutsideFootprint, "point outside region footprint");
  if (r.dispensed_volume == 0.0) return 0.0;
  return r.dispensed_volume / r.shape_integral * detail::unit_shape(r, x, y);
}

/// Glue volume in the simulator's ground truth. Die attachment moves glue
/// under the die and into the fillet but does not change the amount.
inline double analytic_volume(const RegionSpec& r) { return r.dispensed_volume; }

/// Thickness of the glue layer under the die.
inline double bondline(const RegionSpec& r) {
  const DieSpec& d = r.die.value();
  return d.squeeze_ratio * r.dispensed_volume / d.area();
}

inline double die_top_height(const RegionSpec& r) { return bondline(r) + r.die.value().thickness; }

/// Peak height of the fillet bead at the die edge. The bead volume is the
/// profile cross-section times the path length of its centroid (Pappus), which
/// for a rectangle offset outward is perimeter + 2*pi*centroid distance.
inline double fillet_peak(const RegionSpec& r) {
  const DieSpec& d = r.die.value();
  const double w = d.fillet_width;
  const double fillet_volume = (1.0 - d.squeeze_ratio) * r.dispensed_volume;
  const double cross_section = w / 3.0;       // integral of the unit profile
  const double centroid = w / 4.0;
  return fillet_volume / (cross_section * (d.perimeter() + 2.0 * std::numbers::pi * centroid));
}

inline double fillet_height(const RegionSpec& r, double x, double y) {
  const DieSpec& d = r.die.value();
  const double t = detail::distance_to_box(r.die_box(), x, y);
  return fillet_peak(r) * detail::fillet_profile(t, d.fillet_width);
}

/// Returns the attached version of an unattached region: the die squeezes the
/// glue into a bondline under it and a fillet bead around its border.
inline RegionSpec attach_die(const RegionSpec& r) {
  if (!r.die) throw Error(ErrorCode::BadLayoutConfig, "region has no die parameters");
  if (r.attached) throw Error(ErrorCode::BadLayoutConfig, "region already attached");
  const DieSpec& d = *r.die;
  if (d.width <= 0.0 || d.length <= 0.0 || d.thickness < 0.0 || d.fillet_width <= 0.0)
    throw Error(ErrorCode::BadLayoutConfig, "die dimensions must be positive");
  if (d.squeeze_ratio < 0.0 || d.squeeze_ratio > 1.0)
    throw Error(ErrorCode::BadLayoutConfig, "squeeze ratio must lie in [0, 1]");
  RegionSpec out = r;
  out.attached = true;
  const geom::BoundingBox2 db = out.die_box();
  const geom::BoundingBox2 reach{db.min_x - d.fillet_width, db.min_y - d.fillet_width, db.max_x + d.fillet_width,
                                 db.max_y + d.fillet_width};
  if (!r.footprint.contains(reach))
    throw Error(ErrorCode::DieLargerThanFootprint, "die plus fillet does not fit in the region footprint");
  return out;
}

/// Height seen by the scanner above the substrate.
inline double surface_height(const RegionSpec& r, double x, double y) {
  if (!r.attached) return glue_height(r, x, y);
  if (!r.footprint.contains(x, y)) throw Error(ErrorCode::OutsideFootprint, "point outside region footprint");
  if (r.die_box().contains(x, y)) return die_top_height(r);
  return fillet_height(r, x, y);
}

inline double substrate_height(const RegionSpec& r, double x, double y) {
  const auto& s = r.substrate;
  return s.z_offset + s.tilt_x * (x - r.footprint.center_x()) + s.tilt_y * (y - r.footprint.center_y());
}

}  // namespace gluevol::scan
