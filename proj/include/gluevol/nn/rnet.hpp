#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "gluevol/core/binary_io.hpp"
#include "gluevol/core/rng.hpp"
#include "gluevol/nn/layers.hpp"
#include "gluevol/nn/tensor.hpp"
#include "json.hpp"

namespace gluevol::nn {

/// Architecture of the volume regression network: a stack of
/// conv -> leaky relu -> batchnorm -> maxpool blocks followed by a dense
/// layer with one output.
struct NetConfig {
  std::vector<int> channels{32, 64, 128, 256, 512};
  int kernel = 3;
  int conv_stride = 1;
  int conv_pad = 1;
  int pool_window = 2;
  int pool_stride = 2;
  double leaky_slope = 0.01;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  std::array<int, 3> input{32, 32, 64};
  double init_std = 0.02;

  std::size_t blocks() const { return channels.size(); }
  void validate() const;
  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

inline NetConfig tiny_net_config() {
  NetConfig c;
  c.channels = {8, 16, 32, 64, 128};
  return c;
}

/// Shallow comparison model: the first two blocks of the given stack.
inline NetConfig baseline_config(const NetConfig& base) {
  NetConfig c = base;
  c.channels.resize(std::min<std::size_t>(2, base.channels.size()));
  return c;
}

/// Activation dims (x, y, z, channels) at the network input and after each block.
inline std::vector<std::array<int, 4>> shape_chain(const NetConfig& cfg) {
  std::vector<std::array<int, 4>> out;
  std::array<int, 4> s{cfg.input[0], cfg.input[1], cfg.input[2], 1};
  out.push_back(s);
  for (int ch : cfg.channels) {
    for (int a = 0; a < 3; ++a) {
      s[a] = conv_out_dim(s[a], cfg.kernel, cfg.conv_stride, cfg.conv_pad);
      s[a] = pool_out_dim(s[a], cfg.pool_window, cfg.pool_stride);
    }
    s[3] = ch;
    out.push_back(s);
  }
  return out;
}

inline std::size_t flatten_length(const NetConfig& cfg) {
  const auto s = shape_chain(cfg).back();
  return static_cast<std::size_t>(s[0]) * s[1] * s[2] * s[3];
}

inline void NetConfig::validate() const {
  if (kernel <= 0 || conv_stride <= 0 || conv_pad < 0 || pool_window <= 0 || pool_stride <= 0)
    throw Error(ErrorCode::Config, "network kernel, stride, and pool sizes must be positive");
  for (int c : channels)
    if (c <= 0) throw Error(ErrorCode::Config, "channel counts must be positive");
  for (int d : input)
    if (d <= 0) throw Error(ErrorCode::Config, "input dims must be positive");
  if (!(bn_eps > 0.0) || !(bn_momentum >= 0.0 && bn_momentum <= 1.0) || !(init_std >= 0.0))
    throw Error(ErrorCode::Config, "invalid batchnorm or init settings");
  try {
    (void)shape_chain(*this);
  } catch (const Error& e) {
    throw Error(ErrorCode::Config, std::string("input too small for the block stack: ") + e.what());
  }
}

/// Trainable parameter count: conv weights and biases, batchnorm scale and
/// shift, dense weights and bias.
inline std::size_t param_count(const NetConfig& cfg) {
  std::size_t n = 0;
  std::size_t cin = 1;
  const auto k3 = static_cast<std::size_t>(cfg.kernel) * cfg.kernel * cfg.kernel;
  for (int c : cfg.channels) {
    const auto co = static_cast<std::size_t>(c);
    n += co * cin * k3 + co + 2 * co;
    cin = co;
  }
  return n + flatten_length(cfg) + 1;
}

template <typename T>
struct ModelWeights {
  NetConfig config;
  std::vector<Param<T>> params;

  // Layout: per block [conv.weight, conv.bias, bn.scale, bn.shift,
  // bn.running_mean, bn.running_var], then dense.weight, dense.bias,
  // target.shift, target.scale.
  static constexpr std::size_t kPerBlock = 6;
  std::size_t conv_w(std::size_t b) const { return kPerBlock * b; }
  std::size_t dense_w() const { return kPerBlock * config.blocks(); }
  std::size_t target_shift() const { return dense_w() + 2; }
  std::size_t target_scale() const { return dense_w() + 3; }

  Param<T>& at(std::size_t i) { return params.at(i); }
  const Param<T>& at(std::size_t i) const { return params.at(i); }

  /// Network output to mm^3.
  double to_volume(T raw) const {
    return static_cast<double>(raw) * static_cast<double>(params[target_scale()].value[0]) +
           static_cast<double>(params[target_shift()].value[0]);
  }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : params)
      if (p.trainable) n += p.size();
    return n;
  }

  template <typename U>
  ModelWeights<U> cast() const {
    ModelWeights<U> out{config, {}};
    for (const auto& p : params) {
      Param<U> q{p.name, p.shape, std::vector<U>(p.value.begin(), p.value.end()), p.trainable};
      out.params.push_back(std::move(q));
    }
    return out;
  }

  friend bool operator==(const ModelWeights&, const ModelWeights&) = default;
};

/// Conv and dense weights ~ N(0, init_std^2), batchnorm scale ~ N(1, init_std^2),
/// biases and shifts zero, running statistics (0, 1).
template <typename T = double>
ModelWeights<T> init_weights(const NetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelWeights<T> w{cfg, {}};
  auto normal = [&](std::size_t idx, std::size_t n, double mean) {
    Rng rng(derive_seed(seed, {idx}));
    std::normal_distribution<double> d(mean, cfg.init_std);
    std::vector<T> v(n);
    for (auto& x : v) x = static_cast<T>(d(rng));
    return v;
  };
  auto add = [&](std::string name, std::vector<int> shape, std::vector<T> value, bool trainable) {
    w.params.push_back({std::move(name), std::move(shape), std::move(value), trainable});
  };
  int cin = 1;
  for (std::size_t b = 0; b < cfg.blocks(); ++b) {
    const int co = cfg.channels[b];
    const std::string id = std::to_string(b + 1);
    const std::vector<int> kshape{co, cin, cfg.kernel, cfg.kernel, cfg.kernel};
    add("conv" + id + ".weight", kshape, normal(w.params.size(), shape_size(kshape), 0.0), true);
    add("conv" + id + ".bias", {co}, std::vector<T>(co, T(0)), true);
    add("bn" + id + ".scale", {co}, normal(w.params.size(), static_cast<std::size_t>(co), 1.0), true);
    add("bn" + id + ".shift", {co}, std::vector<T>(co, T(0)), true);
    add("bn" + id + ".running_mean", {co}, std::vector<T>(co, T(0)), false);
    add("bn" + id + ".running_var", {co}, std::vector<T>(co, T(1)), false);
    cin = co;
  }
  const int F = static_cast<int>(flatten_length(cfg));
  add("dense.weight", {1, F}, normal(w.params.size(), static_cast<std::size_t>(F), 0.0), true);
  add("dense.bias", {1}, {T(0)}, true);
  add("target.shift", {1}, {T(0)}, false);
  add("target.scale", {1}, {T(1)}, false);
  return w;
}

template <typename T>
struct BlockCache {
  Tensor5<T> conv_in;
  Tensor5<T> pre_act;
  BatchNormCache<T> bn;
  PoolCache pool;
};

template <typename T>
struct ForwardCache {
  std::vector<BlockCache<T>> blocks;
  Tensor5<T> flat_in;
};

namespace detail {

template <typename T>
Tensor5<T> kernel_tensor(const Param<T>& p) {
  Tensor5<T> k(p.shape.at(0), p.shape.at(1), p.shape.at(2), p.shape.at(3), p.shape.at(4));
  k.data = p.value;
  return k;
}

template <typename T>
BatchNormParams<T> bn_params(const ModelWeights<T>& w, std::size_t b) {
  const std::size_t i = w.conv_w(b);
  return {w.at(i + 2).value, w.at(i + 3).value, w.at(i + 4).value, w.at(i + 5).value,
          static_cast<T>(w.config.bn_eps), static_cast<T>(w.config.bn_momentum)};
}

}  // namespace detail

/// Raw network outputs (standardized units) for a batch (N, 1, nx, ny, nz).
/// In train mode batchnorm uses batch statistics; updated running estimates
/// are written to `stats_out` when given. Eval mode mutates nothing.
template <typename T>
std::vector<T> rnet_forward(const ModelWeights<T>& w, const Tensor5<T>& x, Mode mode,
                            std::type_identity_t<ForwardCache<T>>* cache = nullptr,
                            std::type_identity_t<ModelWeights<T>>* stats_out = nullptr, unsigned threads = 1) {
  const NetConfig& cfg = w.config;
  require(x.c() == 1 && x.x() == cfg.input[0] && x.y() == cfg.input[1] && x.z() == cfg.input[2],
          "rnet_forward: input dims " + dims_string(x.dims) + " do not match the network input");
  if (cache) cache->blocks.assign(cfg.blocks(), {});
  const ConvOptions conv{cfg.conv_stride, cfg.conv_pad, threads};
  const T slope = static_cast<T>(cfg.leaky_slope);
  Tensor5<T> h = x;
  for (std::size_t b = 0; b < cfg.blocks(); ++b) {
    const std::size_t i = w.conv_w(b);
    Tensor5<T> pre = conv3d(h, detail::kernel_tensor(w.at(i)), w.at(i + 1).value, conv);
    Tensor5<T> act = leaky_relu(pre, slope);
    auto bnp = detail::bn_params(w, b);
    BatchNormCache<T>* bnc = cache ? &cache->blocks[b].bn : nullptr;
    Tensor5<T> normed = batchnorm3d(act, bnp, mode, bnc);
    if (mode == Mode::Train && stats_out) {
      stats_out->at(i + 4).value = bnp.running_mean;
      stats_out->at(i + 5).value = bnp.running_var;
    }
    PoolCache* pc = cache ? &cache->blocks[b].pool : nullptr;
    Tensor5<T> pooled = maxpool3d(normed, cfg.pool_window, cfg.pool_stride, pc);
    if (cache) {
      cache->blocks[b].conv_in = std::move(h);
      cache->blocks[b].pre_act = std::move(pre);
    }
    h = std::move(pooled);
  }
  auto y = dense(h, w.at(w.dense_w()).value, w.at(w.dense_w() + 1).value);
  if (cache) cache->flat_in = std::move(h);
  return y;
}

/// Gradients aligned with `w.params`; non-trainable entries stay zero.
template <typename T>
std::vector<std::vector<T>> rnet_backward(const ModelWeights<T>& w, const ForwardCache<T>& cache,
                                          const std::vector<T>& dy, unsigned threads = 1) {
  const NetConfig& cfg = w.config;
  std::vector<std::vector<T>> g(w.params.size());
  for (std::size_t i = 0; i < w.params.size(); ++i) g[i].assign(w.params[i].size(), T(0));

  auto dg = dense_backward(cache.flat_in, w.at(w.dense_w()).value, dy);
  g[w.dense_w()] = std::move(dg.weight);
  g[w.dense_w() + 1] = std::move(dg.bias);
  Tensor5<T> d = std::move(dg.input);
  const ConvOptions conv{cfg.conv_stride, cfg.conv_pad, threads};
  const T slope = static_cast<T>(cfg.leaky_slope);
  for (std::size_t b = cfg.blocks(); b-- > 0;) {
    const auto& bc = cache.blocks[b];
    const std::size_t i = w.conv_w(b);
    d = maxpool3d_backward(d, bc.pool);
    auto bg = batchnorm3d_backward(d, w.at(i + 2).value, bc.bn);
    g[i + 2] = std::move(bg.scale);
    g[i + 3] = std::move(bg.shift);
    d = leaky_relu_backward(bc.pre_act, bg.input, slope);
    auto cg = conv3d_backward(bc.conv_in, detail::kernel_tensor(w.at(i)), d, b > 0, conv);
    g[i] = std::move(cg.kernel.data);
    g[i + 1] = std::move(cg.bias);
    d = std::move(cg.input);
  }
  return g;
}

// ---------------------------------------------------------------- GGNN1
//
// magic "GGNN1", u32 version, u32 entry count, then per entry: u32 name
// length, name bytes, u32 trainable flag, u32 rank, u32 dims[rank]; then every
// entry's values as little-endian f64 in table order. Two trailing entries
// hold the architecture: meta.channels and meta.net.

inline constexpr std::string_view kWeightsMagic = "GGNN1";
inline constexpr std::uint32_t kWeightsVersion = 1;

namespace detail {

inline std::vector<double> net_meta(const NetConfig& c) {
  return {static_cast<double>(c.kernel),      static_cast<double>(c.conv_stride), static_cast<double>(c.conv_pad),
          static_cast<double>(c.pool_window), static_cast<double>(c.pool_stride), c.leaky_slope,
          c.bn_eps,                           c.bn_momentum,                      static_cast<double>(c.input[0]),
          static_cast<double>(c.input[1]),    static_cast<double>(c.input[2]),    c.init_std};
}

inline NetConfig net_from_meta(const std::vector<double>& ch, const std::vector<double>& m) {
  if (m.size() != 12) throw Error(ErrorCode::BadFormat, "meta.net must hold 12 values");
  NetConfig c;
  c.channels.assign(ch.begin(), ch.end());
  c.kernel = static_cast<int>(m[0]);
  c.conv_stride = static_cast<int>(m[1]);
  c.conv_pad = static_cast<int>(m[2]);
  c.pool_window = static_cast<int>(m[3]);
  c.pool_stride = static_cast<int>(m[4]);
  c.leaky_slope = m[5];
  c.bn_eps = m[6];
  c.bn_momentum = m[7];
  c.input = {static_cast<int>(m[8]), static_cast<int>(m[9]), static_cast<int>(m[10])};
  c.init_std = m[11];
  return c;
}

}  // namespace detail

template <typename T>
void write_weights(std::ostream& os, const ModelWeights<T>& w) {
  std::vector<Param<double>> table;
  for (const auto& p : w.params)
    table.push_back({p.name, p.shape, std::vector<double>(p.value.begin(), p.value.end()), p.trainable});
  std::vector<double> ch(w.config.channels.begin(), w.config.channels.end());
  table.push_back({"meta.channels", {static_cast<int>(ch.size())}, ch, false});
  const auto meta = detail::net_meta(w.config);
  table.push_back({"meta.net", {static_cast<int>(meta.size())}, meta, false});

  io::write_magic(os, kWeightsMagic);
  io::write_u32(os, kWeightsVersion);
  io::write_u32(os, static_cast<std::uint32_t>(table.size()));
  for (const auto& p : table) {
    io::write_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    io::write_u32(os, p.trainable ? 1u : 0u);
    io::write_u32(os, static_cast<std::uint32_t>(p.shape.size()));
    for (int d : p.shape) io::write_u32(os, static_cast<std::uint32_t>(d));
  }
  for (const auto& p : table)
    for (double v : p.value) io::write_f64(os, v);
}

template <typename T = double>
ModelWeights<T> read_weights(std::istream& is) {
  io::expect_magic(is, kWeightsMagic);
  const auto version = io::read_u32(is);
  if (version != kWeightsVersion) throw Error(ErrorCode::BadFormat, "unsupported weights version " + std::to_string(version));
  const auto count = io::read_u32(is);
  if (count > 100000) throw Error(ErrorCode::BadFormat, "implausible weights table size");
  std::vector<Param<double>> table(count);
  for (auto& p : table) {
    const auto len = io::read_u32(is);
    if (len > 4096) throw Error(ErrorCode::BadFormat, "implausible parameter name length");
    p.name.resize(len);
    io::read_exact(is, p.name.data(), len, "parameter name");
    p.trainable = io::read_u32(is) != 0;
    const auto rank = io::read_u32(is);
    if (rank > 8) throw Error(ErrorCode::BadFormat, "implausible parameter rank");
    p.shape.resize(rank);
    for (auto& d : p.shape) d = static_cast<int>(io::read_u32(is));
    if (shape_size(p.shape) > (1u << 30)) throw Error(ErrorCode::BadFormat, "implausible parameter size");
  }
  for (auto& p : table) {
    p.value.resize(shape_size(p.shape));
    for (auto& v : p.value) v = io::read_f64(is);
  }
  if (table.size() < 2 || table[table.size() - 2].name != "meta.channels" || table.back().name != "meta.net")
    throw Error(ErrorCode::BadFormat, "weights file lacks architecture metadata");
  ModelWeights<T> w;
  w.config = detail::net_from_meta(table[table.size() - 2].value, table.back().value);
  table.resize(table.size() - 2);
  const auto expected = init_weights<T>(w.config, 0);
  if (expected.params.size() != table.size()) throw Error(ErrorCode::BadFormat, "weights table does not match architecture");
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table[i].name != expected.params[i].name || table[i].shape != expected.params[i].shape)
      throw Error(ErrorCode::BadFormat, "unexpected weights entry " + table[i].name);
    auto& p = table[i];
    w.params.push_back({p.name, p.shape, std::vector<T>(p.value.begin(), p.value.end()), p.trainable});
  }
  return w;
}

template <typename T>
void save_weights(const std::filesystem::path& path, const ModelWeights<T>& w) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "cannot open " + path.string());
  write_weights(os, w);
}

template <typename T = double>
ModelWeights<T> load_weights(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::MissingInput, "cannot open " + path.string());
  return read_weights<T>(is);
}

inline void to_json(nlohmann::json& j, const NetConfig& c) {
  j = {{"channels", c.channels},       {"kernel", c.kernel},           {"conv_stride", c.conv_stride},
       {"conv_pad", c.conv_pad},       {"pool_window", c.pool_window}, {"pool_stride", c.pool_stride},
       {"leaky_slope", c.leaky_slope}, {"bn_eps", c.bn_eps},           {"bn_momentum", c.bn_momentum},
       {"input_dims", c.input},        {"init_std", c.init_std}};
}

inline void from_json(const nlohmann::json& j, NetConfig& c) {
  c.channels = j.value("channels", c.channels);
  c.kernel = j.value("kernel", c.kernel);
  c.conv_stride = j.value("conv_stride", c.conv_stride);
  c.conv_pad = j.value("conv_pad", c.conv_pad);
  c.pool_window = j.value("pool_window", c.pool_window);
  c.pool_stride = j.value("pool_stride", c.pool_stride);
  c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
  c.bn_eps = j.value("bn_eps", c.bn_eps);
  c.bn_momentum = j.value("bn_momentum", c.bn_momentum);
  c.input = j.value("input_dims", c.input);
  c.init_std = j.value("init_std", c.init_std);
}

}  // namespace gluevol::nn
