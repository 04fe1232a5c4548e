#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <vector>

#include "gluevol/core/binary_io.hpp"
#include "gluevol/core/error.hpp"
#include "gluevol/geom/point_cloud.hpp"
#include "json.hpp"

namespace gluevol::voxel {

struct GridConfig {
  int nx = 32, ny = 32, nz = 64;
  double z_voxel_base = 0.010;       // mm
  double z_voxel_increment = 0.005;  // mm
  double coverage_target = 0.98;
  /// Fixed voxel sizes (per glue type) override the per-cloud rules; the
  /// grid is then centred on the cloud in XY.
  std::optional<double> fixed_dx, fixed_dy, fixed_dz;

  void validate() const {
    if (nx <= 0 || ny <= 0 || nz <= 0) throw Error(ErrorCode::Config, "voxel counts must be positive");
    if (!(z_voxel_base > 0.0) || !(z_voxel_increment > 0.0))
      throw Error(ErrorCode::Config, "z voxel base and increment must be positive");
    if (!(coverage_target > 0.0 && coverage_target <= 1.0))
      throw Error(ErrorCode::Config, "coverage target must lie in (0, 1]");
  }
};

/// Binary occupancy grid. Bit (i, j, k) lives at linear index
/// (k * ny + j) * nx + i, packed LSB-first into bytes.
struct VoxelGrid {
  int nx = 0, ny = 0, nz = 0;
  geom::Point3 origin;
  double dx = 0.0, dy = 0.0, dz = 0.0;
  std::vector<std::uint8_t> bits;

  VoxelGrid() = default;
  VoxelGrid(int x, int y, int z) : nx(x), ny(y), nz(z), bits((static_cast<std::size_t>(x) * y * z + 7) / 8, 0) {}

  std::size_t voxel_count() const { return static_cast<std::size_t>(nx) * ny * nz; }
  std::size_t linear(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * ny + j) * nx + i;
  }
  bool get(int i, int j, int k) const {
    const std::size_t l = linear(i, j, k);
    return (bits[l >> 3] >> (l & 7)) & 1u;
  }
  void set(int i, int j, int k) {
    const std::size_t l = linear(i, j, k);
    bits[l >> 3] = static_cast<std::uint8_t>(bits[l >> 3] | (1u << (l & 7)));
  }
  std::size_t occupied() const {
    std::size_t n = 0;
    for (auto b : bits) n += static_cast<std::size_t>(std::popcount(b));
    return n;
  }
  friend bool operator==(const VoxelGrid&, const VoxelGrid&) = default;
};

namespace detail {

/// Cell index for a coordinate in [lo, lo + n * d]; the upper boundary
/// belongs to the last cell. Returns -1 outside.
inline int cell_index(double v, double lo, double d, int n) {
  const double t = (v - lo) / d;
  if (t < 0.0) return -1;
  auto i = static_cast<long>(std::floor(t));
  if (i >= n) {
    if (v <= lo + n * d) return n - 1;
    return -1;
  }
  return static_cast<int>(i);
}

inline double fraction_inside(const std::vector<double>& sorted_z, double top) {
  const auto it = std::upper_bound(sorted_z.begin(), sorted_z.end(), top);
  return static_cast<double>(it - sorted_z.begin()) / static_cast<double>(sorted_z.size());
}

}  // namespace detail

/// Smallest z voxel size base + k * increment whose nz voxels cover at least
/// the target fraction of points (z at or below nz * dz; points below the
/// substrate count as covered).
inline double choose_dz(const geom::PointCloud& cloud, const GridConfig& cfg) {
  std::vector<double> z;
  z.reserve(cloud.size());
  for (const auto& p : cloud.points) z.push_back(p.z);
  std::sort(z.begin(), z.end());
  const auto need = static_cast<std::size_t>(std::ceil(cfg.coverage_target * static_cast<double>(z.size()) - 1e-9));
  const double zq = z[std::max<std::size_t>(need, 1) - 1];
  long k = std::max(0L, static_cast<long>(std::ceil((zq / cfg.nz - cfg.z_voxel_base) / cfg.z_voxel_increment)) - 1);
  auto dz_of = [&](long kk) { return cfg.z_voxel_base + static_cast<double>(kk) * cfg.z_voxel_increment; };
  while (detail::fraction_inside(z, cfg.nz * dz_of(k)) < cfg.coverage_target - 1e-12) ++k;
  while (k > 0 && detail::fraction_inside(z, cfg.nz * dz_of(k - 1)) >= cfg.coverage_target - 1e-12) --k;
  return dz_of(k);
}

/// Occupancy grid of a plane-frame cloud. XY voxel sizes are the cloud
/// ranges divided by the voxel counts and the origin is the cloud minimum;
/// z is anchored at the substrate (z = 0). A voxel is set when at least one
/// point falls in its half-open box; points above the grid are dropped.
inline VoxelGrid build_grid(const geom::PointCloud& cloud, const GridConfig& cfg) {
  cfg.validate();
  if (cloud.empty()) throw Error(ErrorCode::EmptyCloud, "cannot voxelize an empty cloud");
  const geom::Extent3 e = geom::extent(cloud);
  VoxelGrid g(cfg.nx, cfg.ny, cfg.nz);

  // A degenerate axis gets 1 um voxels so that every point still lands in cell 0.
  auto xy_size = [](double range, int n) { return range > 0.0 ? range / n : 1e-3; };
  if (cfg.fixed_dx) {
    g.dx = *cfg.fixed_dx;
    if (g.dx * cfg.nx < e.range_x() * (1.0 - 1e-9))
      throw Error(ErrorCode::Config, "fixed dx is too small for the cloud's x range");
    g.origin.x = 0.5 * (e.lo.x + e.hi.x) - 0.5 * g.dx * cfg.nx;
  } else {
    g.dx = xy_size(e.range_x(), cfg.nx);
    g.origin.x = e.lo.x;
  }
  if (cfg.fixed_dy) {
    g.dy = *cfg.fixed_dy;
    if (g.dy * cfg.ny < e.range_y() * (1.0 - 1e-9))
      throw Error(ErrorCode::Config, "fixed dy is too small for the cloud's y range");
    g.origin.y = 0.5 * (e.lo.y + e.hi.y) - 0.5 * g.dy * cfg.ny;
  } else {
    g.dy = xy_size(e.range_y(), cfg.ny);
    g.origin.y = e.lo.y;
  }
  g.origin.z = 0.0;
  g.dz = cfg.fixed_dz ? *cfg.fixed_dz : choose_dz(cloud, cfg);

  for (const auto& p : cloud.points) {
    int i = detail::cell_index(p.x, g.origin.x, g.dx, g.nx);
    int j = detail::cell_index(p.y, g.origin.y, g.dy, g.ny);
    // the per-cloud rule makes the max coordinate land exactly on the boundary
    if (i < 0 && !cfg.fixed_dx && p.x >= e.lo.x) i = g.nx - 1;
    if (j < 0 && !cfg.fixed_dy && p.y >= e.lo.y) j = g.ny - 1;
    int k = p.z < 0.0 ? 0 : detail::cell_index(p.z, 0.0, g.dz, g.nz);
    if (i < 0 || j < 0 || k < 0) continue;
    g.set(i, j, k);
  }
  return g;
}

struct GridStats {
  std::size_t occupied = 0;
  double fill_fraction = 0.0;
  double dz = 0.0;
};

inline GridStats grid_stats(const VoxelGrid& g) {
  GridStats s;
  s.occupied = g.occupied();
  s.fill_fraction = static_cast<double>(s.occupied) / static_cast<double>(g.voxel_count());
  s.dz = g.dz;
  return s;
}

/// Fraction of points that fall inside the grid volume.
inline double coverage(const geom::PointCloud& cloud, const VoxelGrid& g) {
  std::size_t inside = 0;
  for (const auto& p : cloud.points) {
    const bool in_z = p.z < 0.0 || detail::cell_index(p.z, 0.0, g.dz, g.nz) >= 0;
    const bool in_x = p.x >= g.origin.x - 1e-12 && p.x <= g.origin.x + g.nx * g.dx + 1e-12;
    const bool in_y = p.y >= g.origin.y - 1e-12 && p.y <= g.origin.y + g.ny * g.dy + 1e-12;
    if (in_x && in_y && in_z) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(cloud.size());
}

// GGVG1: magic, u32 nx ny nz, f64 dx dy dz, f64 origin xyz, packed bits.
inline constexpr std::string_view kGridMagic = "GGVG1";

inline void write_grid(std::ostream& os, const VoxelGrid& g) {
  io::write_magic(os, kGridMagic);
  io::write_u32(os, static_cast<std::uint32_t>(g.nx));
  io::write_u32(os, static_cast<std::uint32_t>(g.ny));
  io::write_u32(os, static_cast<std::uint32_t>(g.nz));
  io::write_f64(os, g.dx);
  io::write_f64(os, g.dy);
  io::write_f64(os, g.dz);
  io::write_f64(os, g.origin.x);
  io::write_f64(os, g.origin.y);
  io::write_f64(os, g.origin.z);
  os.write(reinterpret_cast<const char*>(g.bits.data()), static_cast<std::streamsize>(g.bits.size()));
}

inline VoxelGrid read_grid(std::istream& is) {
  io::expect_magic(is, kGridMagic);
  const auto nx = io::read_u32(is), ny = io::read_u32(is), nz = io::read_u32(is);
  if (nx == 0 || ny == 0 || nz == 0 || static_cast<std::uint64_t>(nx) * ny * nz > (1ULL << 32))
    throw Error(ErrorCode::BadFormat, "implausible grid dimensions");
  VoxelGrid g(static_cast<int>(nx), static_cast<int>(ny), static_cast<int>(nz));
  g.dx = io::read_f64(is);
  g.dy = io::read_f64(is);
  g.dz = io::read_f64(is);
  g.origin.x = io::read_f64(is);
  g.origin.y = io::read_f64(is);
  g.origin.z = io::read_f64(is);
  io::read_exact(is, g.bits.data(), g.bits.size(), "grid bits");
  return g;
}

inline void save_grid(const std::filesystem::path& path, const VoxelGrid& g) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "cannot open " + path.string());
  write_grid(os, g);
}

inline VoxelGrid load_grid(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::MissingInput, "cannot open " + path.string());
  return read_grid(is);
}

inline void to_json(nlohmann::json& j, const GridConfig& c) {
  j = {{"dims", {c.nx, c.ny, c.nz}},
       {"z_voxel_base_mm", c.z_voxel_base},
       {"z_voxel_increment_mm", c.z_voxel_increment},
       {"coverage_target", c.coverage_target}};
  // null keeps the per-cloud rule
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  j["fixed_dx_mm"] = opt(c.fixed_dx);
  j["fixed_dy_mm"] = opt(c.fixed_dy);
  j["fixed_dz_mm"] = opt(c.fixed_dz);
}

inline void from_json(const nlohmann::json& j, GridConfig& c) {
  if (j.contains("dims")) {
    c.nx = j.at("dims").at(0).get<int>();
    c.ny = j.at("dims").at(1).get<int>();
    c.nz = j.at("dims").at(2).get<int>();
  }
  c.z_voxel_base = j.value("z_voxel_base_mm", c.z_voxel_base);
  c.z_voxel_increment = j.value("z_voxel_increment_mm", c.z_voxel_increment);
  c.coverage_target = j.value("coverage_target", c.coverage_target);
  auto opt = [&](const char* key, std::optional<double>& v) {
    if (!j.contains(key)) return;
    if (j.at(key).is_null()) v.reset();
    else v = j.at(key).get<double>();
  };
  opt("fixed_dx_mm", c.fixed_dx);
  opt("fixed_dy_mm", c.fixed_dy);
  opt("fixed_dz_mm", c.fixed_dz);
}

}  // namespace gluevol::voxel
