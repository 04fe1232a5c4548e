#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gluevol/core/error.hpp"
#include "gluevol/core/rng.hpp"
#include "gluevol/scan/region.hpp"
#include "json.hpp"

namespace gluevol::scan {

/// Per glue type geometry and nominal amounts.
struct TypeLayout {
  double footprint_width = 1.0;   // mm, scan region along x
  double footprint_length = 1.8;  // mm, scan region along y
  double base_volume = 0.04;      // mm^3 at column scale 1
  GlueShape shape;
  DieSpec die;
};

enum class AttachPattern { None, All, Half };

inline std::string to_string(AttachPattern p) {
  switch (p) {
    case AttachPattern::None: return "none";
    case AttachPattern::All: return "all";
    case AttachPattern::Half: return "half";
  }
  return "none";
}

inline AttachPattern attach_pattern_from_string(const std::string& s) {
  if (s == "none") return AttachPattern::None;
  if (s == "all") return AttachPattern::All;
  if (s == "half") return AttachPattern::Half;
  throw Error(ErrorCode::BadLayoutConfig, "unknown attach pattern '" + s + "'");
}

struct LayoutConfig {
  int rows = 2;
  int columns = 9;
  int deposits_per_type = 4;
  /// Glue amount multiplier per column, insufficient to excessive.
  std::vector<double> column_scales{1.0 / 3, 1.0 / 2, 2.0 / 3, 5.0 / 6, 1.0, 7.0 / 6, 4.0 / 3, 3.0 / 2, 5.0 / 3};
  std::array<TypeLayout, 5> types = default_types();
  std::vector<GlueType> enabled_types{kAllGlueTypes.begin(), kAllGlueTypes.end()};

  // Per-region placement variation.
  double squeeze_sigma = 0.03;
  double die_thickness_sigma = 0.004;  // mm
  double die_offset_sigma = 0.01;      // mm
  double substrate_tilt_sigma = 5e-4;
  double substrate_offset_sigma = 0.01;  // mm

  static std::array<TypeLayout, 5> default_types() {
    std::array<TypeLayout, 5> t{};
    // A and C: large strips; B and D: small dots with less glue; E: medium.
    t[0] = {1.0, 1.8, 0.040, {}, {0.45, 1.2, 0.10, 0.85, 0.06}};
    t[1] = {0.6, 1.0, 0.012, {}, {0.30, 0.60, 0.08, 0.85, 0.05}};
    t[2] = {1.0, 1.8, 0.040, {}, {0.45, 1.2, 0.10, 0.85, 0.06}};
    t[3] = {0.6, 1.0, 0.012, {}, {0.30, 0.60, 0.08, 0.85, 0.05}};
    t[4] = {0.8, 1.4, 0.025, {}, {0.36, 0.90, 0.09, 0.85, 0.05}};
    t[1].shape.bump_sigma = t[3].shape.bump_sigma = 0.08;
    return t;
  }

  const TypeLayout& type(GlueType g) const { return types[static_cast<std::size_t>(index_of(g))]; }

  void validate() const {
    if (rows < 1 || columns < 1 || deposits_per_type < 1)
      throw Error(ErrorCode::BadLayoutConfig, "rows, columns and deposits must be positive");
    if (static_cast<int>(column_scales.size()) != columns)
      throw Error(ErrorCode::BadLayoutConfig, "need one volume scale per column");
    for (std::size_t i = 0; i < column_scales.size(); ++i) {
      if (!(column_scales[i] > 0.0)) throw Error(ErrorCode::BadLayoutConfig, "column scales must be positive");
      if (i > 0 && !(column_scales[i] > column_scales[i - 1]))
        throw Error(ErrorCode::BadLayoutConfig, "column scales must be strictly increasing");
    }
    if (enabled_types.empty()) throw Error(ErrorCode::BadLayoutConfig, "no glue types enabled");
    for (const auto& t : types)
      if (!(t.base_volume >= 0.0) || !(t.footprint_width > 0.0) || !(t.footprint_length > 0.0))
        throw Error(ErrorCode::BadLayoutConfig, "type layout needs positive footprint and non-negative volume");
  }
};

struct Circuit {
  int row = 0;     // 1-based
  int column = 0;  // 1-based
  std::vector<RegionSpec> regions;
};

struct PcbModel {
  int index = 1;
  AttachPattern pattern = AttachPattern::None;
  int rows = 0, columns = 0;
  std::vector<Circuit> circuits;  // row-major
  std::vector<double> column_scales;
  std::uint64_t seed = 0;

  std::size_t region_count() const {
    std::size_t n = 0;
    for (const auto& c : circuits) n += c.regions.size();
    return n;
  }
  const Circuit& circuit(int row, int column) const {
    return circuits.at(static_cast<std::size_t>((row - 1) * columns + (column - 1)));
  }
};

inline bool row_attached(AttachPattern p, int row) {
  switch (p) {
    case AttachPattern::None: return false;
    case AttachPattern::All: return true;
    case AttachPattern::Half: return row == 1;  // the second row stays bare
  }
  return false;
}

inline int region_id(int pcb, int row, int column, GlueType t, int deposit) {
  return (((pcb * 16 + row) * 32 + column) * 8 + index_of(t)) * 8 + deposit;
}

/// Deterministic board: rows x columns circuits, each holding
/// deposits_per_type regions of every enabled glue type. Glue amount depends
/// only on type and column; die placement and board pose vary per region.
inline PcbModel make_pcb(const LayoutConfig& cfg, std::uint64_t seed, int pcb_index = 1,
                         AttachPattern pattern = AttachPattern::None) {
  cfg.validate();
  PcbModel pcb;
  pcb.index = pcb_index;
  pcb.pattern = pattern;
  pcb.rows = cfg.rows;
  pcb.columns = cfg.columns;
  pcb.column_scales = cfg.column_scales;
  pcb.seed = seed;

  // Shape integrals depend only on the type, so compute them once.
  std::array<RegionSpec, 5> proto;
  for (GlueType t : cfg.enabled_types) {
    const TypeLayout& tl = cfg.type(t);
    proto[static_cast<std::size_t>(index_of(t))] =
        make_region(t, {0.0, 0.0, tl.footprint_width, tl.footprint_length}, tl.shape, 0.0);
  }

  for (int row = 1; row <= cfg.rows; ++row) {
    for (int col = 1; col <= cfg.columns; ++col) {
      Circuit c{row, col, {}};
      for (GlueType t : cfg.enabled_types) {
        const TypeLayout& tl = cfg.type(t);
        for (int dep = 1; dep <= cfg.deposits_per_type; ++dep) {
          RegionSpec r = proto[static_cast<std::size_t>(index_of(t))];
          r.dispensed_volume = tl.base_volume * cfg.column_scales[static_cast<std::size_t>(col - 1)];
          r.pcb = pcb_index, r.row = row, r.column = col, r.deposit = dep;
          r.id = region_id(pcb_index, row, col, t, dep);

          Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(r.id)}));
          std::normal_distribution<double> gauss(0.0, 1.0);
          DieSpec d = tl.die;
          d.thickness = std::max(0.0, d.thickness + cfg.die_thickness_sigma * gauss(rng));
          d.squeeze_ratio = std::clamp(d.squeeze_ratio + cfg.squeeze_sigma * gauss(rng), 0.5, 0.98);
          const double lim = 2.0 * cfg.die_offset_sigma;
          d.offset_x = std::clamp(cfg.die_offset_sigma * gauss(rng), -lim, lim);
          d.offset_y = std::clamp(cfg.die_offset_sigma * gauss(rng), -lim, lim);
          r.die = d;
          r.substrate.tilt_x = cfg.substrate_tilt_sigma * gauss(rng);
          r.substrate.tilt_y = cfg.substrate_tilt_sigma * gauss(rng);
          r.substrate.z_offset = cfg.substrate_offset_sigma * gauss(rng);
          if (row_attached(pattern, row)) r = attach_die(r);
          c.regions.push_back(std::move(r));
        }
      }
      pcb.circuits.push_back(std::move(c));
    }
  }
  return pcb;
}

/// Evenly spaced, strictly increasing scales.
inline std::vector<double> linear_scales(int columns, double first, double last) {
  std::vector<double> s(static_cast<std::size_t>(columns));
  for (int i = 0; i < columns; ++i)
    s[static_cast<std::size_t>(i)] = columns == 1 ? first : first + (last - first) * i / (columns - 1);
  return s;
}

// JSON

inline void to_json(nlohmann::json& j, const GlueShape& s) {
  j = {{"profile", s.profile == CapProfile::SphericalCap ? "spherical_cap" : "raised_cosine"},
       {"curvature_radius", s.curvature_radius},
       {"extent_x", s.extent_x},           {"extent_y", s.extent_y},         {"exponent", s.exponent},
       {"flatness", s.flatness},           {"bump_amplitude", s.bump_amplitude}, {"bump_position", s.bump_position},
       {"bump_sigma_mm", s.bump_sigma}};
}
inline void from_json(const nlohmann::json& j, GlueShape& s) {
  s.extent_x = j.value("extent_x", s.extent_x);
  s.extent_y = j.value("extent_y", s.extent_y);
  s.exponent = j.value("exponent", s.exponent);
  s.flatness = j.value("flatness", s.flatness);
  s.bump_amplitude = j.value("bump_amplitude", s.bump_amplitude);
  s.bump_position = j.value("bump_position", s.bump_position);
  s.bump_sigma = j.value("bump_sigma_mm", s.bump_sigma);
  s.curvature_radius = j.value("curvature_radius", s.curvature_radius);
  if (j.contains("profile")) {
    const auto p = j.at("profile").get<std::string>();
    if (p == "spherical_cap") s.profile = CapProfile::SphericalCap;
    else if (p == "raised_cosine") s.profile = CapProfile::RaisedCosine;
    else throw Error(ErrorCode::BadLayoutConfig, "unknown cap profile '" + p + "'");
  }
}

inline void to_json(nlohmann::json& j, const DieSpec& d) {
  j = {{"width_mm", d.width},           {"length_mm", d.length},           {"thickness_mm", d.thickness},
       {"squeeze_ratio", d.squeeze_ratio}, {"fillet_width_mm", d.fillet_width}};
}
inline void from_json(const nlohmann::json& j, DieSpec& d) {
  d.width = j.value("width_mm", d.width);
  d.length = j.value("length_mm", d.length);
  d.thickness = j.value("thickness_mm", d.thickness);
  d.squeeze_ratio = j.value("squeeze_ratio", d.squeeze_ratio);
  d.fillet_width = j.value("fillet_width_mm", d.fillet_width);
}

inline void to_json(nlohmann::json& j, const TypeLayout& t) {
  j = {{"footprint_mm", {t.footprint_width, t.footprint_length}},
       {"base_volume_mm3", t.base_volume},
       {"shape", t.shape},
       {"die", t.die}};
}
inline void from_json(const nlohmann::json& j, TypeLayout& t) {
  if (j.contains("footprint_mm")) {
    t.footprint_width = j.at("footprint_mm").at(0).get<double>();
    t.footprint_length = j.at("footprint_mm").at(1).get<double>();
  }
  t.base_volume = j.value("base_volume_mm3", t.base_volume);
  if (j.contains("shape")) from_json(j.at("shape"), t.shape);
  if (j.contains("die")) from_json(j.at("die"), t.die);
}

inline void to_json(nlohmann::json& j, const LayoutConfig& c) {
  nlohmann::json types = nlohmann::json::object();
  for (GlueType t : kAllGlueTypes) types[std::string(1, to_char(t))] = c.type(t);
  std::vector<std::string> enabled;
  for (GlueType t : c.enabled_types) enabled.emplace_back(1, to_char(t));
  j = {{"rows", c.rows},
       {"columns", c.columns},
       {"deposits_per_type", c.deposits_per_type},
       {"column_scales", c.column_scales},
       {"types", types},
       {"enabled_types", enabled},
       {"squeeze_sigma", c.squeeze_sigma},
       {"die_thickness_sigma_mm", c.die_thickness_sigma},
       {"die_offset_sigma_mm", c.die_offset_sigma},
       {"substrate_tilt_sigma", c.substrate_tilt_sigma},
       {"substrate_offset_sigma_mm", c.substrate_offset_sigma}};
}

inline void from_json(const nlohmann::json& j, LayoutConfig& c) {
  c.rows = j.value("rows", c.rows);
  c.columns = j.value("columns", c.columns);
  c.deposits_per_type = j.value("deposits_per_type", c.deposits_per_type);
  if (j.contains("column_scales")) c.column_scales = j.at("column_scales").get<std::vector<double>>();
  if (j.contains("types"))
    for (auto it = j.at("types").begin(); it != j.at("types").end(); ++it) {
      if (it.key().size() != 1) throw Error(ErrorCode::BadLayoutConfig, "bad glue type key '" + it.key() + "'");
      from_json(it.value(), c.types[static_cast<std::size_t>(index_of(glue_type_from_char(it.key()[0])))]);
    }
  if (j.contains("enabled_types")) {
    c.enabled_types.clear();
    for (const auto& s : j.at("enabled_types")) {
      const auto str = s.get<std::string>();
      if (str.size() != 1) throw Error(ErrorCode::BadLayoutConfig, "bad glue type '" + str + "'");
      c.enabled_types.push_back(glue_type_from_char(str[0]));
    }
  }
  c.squeeze_sigma = j.value("squeeze_sigma", c.squeeze_sigma);
  c.die_thickness_sigma = j.value("die_thickness_sigma_mm", c.die_thickness_sigma);
  c.die_offset_sigma = j.value("die_offset_sigma_mm", c.die_offset_sigma);
  c.substrate_tilt_sigma = j.value("substrate_tilt_sigma", c.substrate_tilt_sigma);
  c.substrate_offset_sigma = j.value("substrate_offset_sigma_mm", c.substrate_offset_sigma);
}

}  // namespace gluevol::scan
