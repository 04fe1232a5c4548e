#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "gluevol/core/binary_io.hpp"
#include "gluevol/core/error.hpp"
#include "gluevol/geom/point_cloud.hpp"

namespace gluevol::geom {

inline constexpr std::string_view kCloudMagic = "GGPC1";

namespace detail {

inline void append_fixed(std::string& s, double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 9);
  s.append(buf, r.ptr);
}

inline bool parse_double(std::string_view tok, double& out) {
  auto r = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return r.ec == std::errc() && r.ptr == tok.data() + tok.size();
}

}  // namespace detail

/// `.xyz` text: "x y z" per line in mm with 9 decimals; metadata goes in
/// `# key=value` comment lines.
inline void write_xyz(std::ostream& os, const PointCloud& cloud) {
  if (cloud.meta) {
    const auto& m = *cloud.meta;
    os << "# region_id=" << m.region_id << " glue_type=" << m.glue_type << " step_um=" << m.step_um
       << " pass=" << m.pass << '\n';
  }
  std::string line;
  for (const auto& p : cloud.points) {
    line.clear();
    detail::append_fixed(line, p.x);
    line += ' ';
    detail::append_fixed(line, p.y);
    line += ' ';
    detail::append_fixed(line, p.z);
    line += '\n';
    os << line;
  }
}

inline PointCloud read_xyz(std::istream& is) {
  PointCloud cloud;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string_view sv(line);
    while (!sv.empty() && (sv.back() == '\r' || sv.back() == ' ' || sv.back() == '\t')) sv.remove_suffix(1);
    std::size_t start = sv.find_first_not_of(" \t");
    if (start == std::string_view::npos) continue;
    sv.remove_prefix(start);
    if (sv.front() == '#') {
      std::istringstream kv{std::string(sv.substr(1))};
      std::string tok;
      while (kv >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
        if (!cloud.meta) cloud.meta = CloudMeta{};
        if (key == "region_id") cloud.meta->region_id = std::stoi(val);
        else if (key == "glue_type" && !val.empty()) cloud.meta->glue_type = val[0];
        else if (key == "step_um") cloud.meta->step_um = std::stod(val);
        else if (key == "pass") cloud.meta->pass = std::stoi(val);
      }
      continue;
    }
    double v[3];
    int n = 0;
    while (!sv.empty()) {
      const std::size_t end = sv.find_first_of(" \t");
      const std::string_view tok = sv.substr(0, end);
      if (n >= 3 || !detail::parse_double(tok, v[n]))
        throw Error(ErrorCode::BadFormat, "xyz line " + std::to_string(lineno) + ": expected three numbers");
      ++n;
      if (end == std::string_view::npos) break;
      sv.remove_prefix(end);
      const std::size_t next = sv.find_first_not_of(" \t");
      if (next == std::string_view::npos) break;
      sv.remove_prefix(next);
    }
    if (n != 3) throw Error(ErrorCode::BadFormat, "xyz line " + std::to_string(lineno) + ": expected three numbers");
    cloud.points.push_back({v[0], v[1], v[2]});
  }
  return cloud;
}

/// GGPC1 binary: magic, u32 point count, little-endian f64 triples.
inline void write_ggpc(std::ostream& os, const PointCloud& cloud) {
  io::write_magic(os, kCloudMagic);
  io::write_u32(os, static_cast<std::uint32_t>(cloud.size()));
  for (const auto& p : cloud.points) {
    io::write_f64(os, p.x);
    io::write_f64(os, p.y);
    io::write_f64(os, p.z);
  }
}

inline PointCloud read_ggpc(std::istream& is) {
  io::expect_magic(is, kCloudMagic);
  const std::uint32_t n = io::read_u32(is);
  PointCloud cloud;
  cloud.points.resize(n);
  for (auto& p : cloud.points) {
    p.x = io::read_f64(is);
    p.y = io::read_f64(is);
    p.z = io::read_f64(is);
  }
  return cloud;
}

/// Dispatches on extension: `.xyz` is text, anything else GGPC1.
inline void save_cloud(const std::filesystem::path& path, const PointCloud& cloud) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  if (path.extension() == ".xyz") write_xyz(os, cloud);
  else write_ggpc(os, cloud);
  if (!os) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

inline PointCloud load_cloud(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::MissingInput, "cannot open " + path.string());
  return path.extension() == ".xyz" ? read_xyz(is) : read_ggpc(is);
}

}  // namespace gluevol::geom
