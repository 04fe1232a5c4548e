#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "gluevol/core/error.hpp"

namespace gluevol::nn {

/// Dense 5-D tensor laid out (batch, channel, x, y, z), z fastest.
template <typename T>
struct Tensor5 {
  std::array<int, 5> dims{0, 0, 0, 0, 0};
  std::vector<T> data;

  Tensor5() = default;
  Tensor5(int n, int c, int x, int y, int z, T fill = T(0))
      : dims{n, c, x, y, z}, data(static_cast<std::size_t>(n) * c * x * y * z, fill) {}
  explicit Tensor5(std::array<int, 5> d, T fill = T(0)) : Tensor5(d[0], d[1], d[2], d[3], d[4], fill) {}

  int n() const { return dims[0]; }
  int c() const { return dims[1]; }
  int x() const { return dims[2]; }
  int y() const { return dims[3]; }
  int z() const { return dims[4]; }
  std::size_t spatial() const { return static_cast<std::size_t>(dims[2]) * dims[3] * dims[4]; }
  std::size_t sample_size() const { return spatial() * static_cast<std::size_t>(dims[1]); }
  std::size_t size() const { return data.size(); }

  std::size_t index(int b, int ch, int i, int j, int k) const {
    return (((static_cast<std::size_t>(b) * dims[1] + ch) * dims[2] + i) * dims[3] + j) * dims[4] + k;
  }
  T& operator()(int b, int ch, int i, int j, int k) { return data[index(b, ch, i, j, k)]; }
  T operator()(int b, int ch, int i, int j, int k) const { return data[index(b, ch, i, j, k)]; }

  T* sample(int b) { return data.data() + static_cast<std::size_t>(b) * sample_size(); }
  const T* sample(int b) const { return data.data() + static_cast<std::size_t>(b) * sample_size(); }

  bool all_finite() const {
    return std::all_of(data.begin(), data.end(), [](T v) { return std::isfinite(v); });
  }
  friend bool operator==(const Tensor5&, const Tensor5&) = default;
};

inline std::string dims_string(const std::array<int, 5>& d) {
  return std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]) + "x" +
         std::to_string(d[3]) + "x" + std::to_string(d[4]);
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
}

/// Named parameter or buffer with an arbitrary shape.
template <typename T>
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  bool trainable = true;

  std::size_t size() const { return value.size(); }
  friend bool operator==(const Param&, const Param&) = default;
};

inline std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

}  // namespace gluevol::nn
