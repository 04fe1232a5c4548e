#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "gluevol/core/error.hpp"

// Little-endian primitives shared by the GGPC1 / GGVG1 / GGNN1 formats.
namespace gluevol::io {

namespace detail {
template <typename U>
U byteswap_if_big(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    U r = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) r = static_cast<U>((r << 8) | ((v >> (8 * i)) & 0xff));
    return r;
  } else {
    return v;
  }
}
}  // namespace detail

inline void write_u32(std::ostream& os, std::uint32_t v) {
  v = detail::byteswap_if_big(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_f64(std::ostream& os, double d) {
  auto v = detail::byteswap_if_big(std::bit_cast<std::uint64_t>(d));
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_magic(std::ostream& os, std::string_view magic) { os.write(magic.data(), static_cast<std::streamsize>(magic.size())); }

inline void read_exact(std::istream& is, void* dst, std::size_t n, const char* what) {
  is.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) throw Error(ErrorCode::BadFormat, std::string("truncated ") + what);
}

inline std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v;
  read_exact(is, &v, sizeof v, "u32");
  return detail::byteswap_if_big(v);
}

inline double read_f64(std::istream& is) {
  std::uint64_t v;
  read_exact(is, &v, sizeof v, "f64");
  return std::bit_cast<double>(detail::byteswap_if_big(v));
}

inline void expect_magic(std::istream& is, std::string_view magic) {
  std::string got(magic.size(), '\0');
  read_exact(is, got.data(), got.size(), "magic");
  if (got != magic) throw Error(ErrorCode::BadFormat, "bad magic, expected " + std::string(magic));
}

}  // namespace gluevol::io
