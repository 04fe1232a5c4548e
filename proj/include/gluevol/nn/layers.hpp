#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "gluevol/core/parallel.hpp"
#include "gluevol/nn/tensor.hpp"

namespace gluevol::nn {

enum class Mode { Train, Eval };

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// ---------------------------------------------------------------- conv3d

inline int conv_out_dim(int in, int k, int stride, int pad) {
  const int span = in + 2 * pad - k;
  require(span >= 0 && stride > 0, "conv3d: kernel larger than padded input");
  return span / stride + 1;
}

struct ConvGeometry {
  int cin, kx, ky, kz, stride, pad;
  int ix, iy, iz, ox, oy, oz;
  std::size_t rows() const { return static_cast<std::size_t>(cin) * kx * ky * kz; }
  std::size_t in_spatial() const { return static_cast<std::size_t>(ix) * iy * iz; }
  std::size_t out_spatial() const { return static_cast<std::size_t>(ox) * oy * oz; }
};

template <typename T>
ConvGeometry conv_geometry(const Tensor5<T>& x, const Tensor5<T>& w, int stride, int pad) {
  require(w.c() == x.c(), "conv3d: kernel expects " + std::to_string(w.c()) + " input channels, got " +
                              std::to_string(x.c()));
  ConvGeometry g{x.c(), w.x(), w.y(), w.z(), stride, pad, x.x(), x.y(), x.z(), 0, 0, 0};
  g.ox = conv_out_dim(x.x(), w.x(), stride, pad);
  g.oy = conv_out_dim(x.y(), w.y(), stride, pad);
  g.oz = conv_out_dim(x.z(), w.z(), stride, pad);
  return g;
}

namespace detail {

// col[(c, a, b, d), (i, j, k)] = x[c, i*s - p + a, j*s - p + b, k*s - p + d], zero outside.
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const std::size_t P = g.out_spatial();
  std::size_t row = 0;
  for (int c = 0; c < g.cin; ++c)
    for (int a = 0; a < g.kx; ++a)
      for (int b = 0; b < g.ky; ++b)
        for (int d = 0; d < g.kz; ++d, ++row) {
          T* out = col + row * P;
          const T* xc = x + static_cast<std::size_t>(c) * g.in_spatial();
          for (int i = 0; i < g.ox; ++i) {
            const int xi = i * g.stride - g.pad + a;
            for (int j = 0; j < g.oy; ++j) {
              T* o = out + (static_cast<std::size_t>(i) * g.oy + j) * g.oz;
              const int yj = j * g.stride - g.pad + b;
              if (xi < 0 || xi >= g.ix || yj < 0 || yj >= g.iy) {
                std::fill(o, o + g.oz, T(0));
                continue;
              }
              const T* src = xc + (static_cast<std::size_t>(xi) * g.iy + yj) * g.iz;
              for (int k = 0; k < g.oz; ++k) {
                const int zk = k * g.stride - g.pad + d;
                o[k] = (zk >= 0 && zk < g.iz) ? src[zk] : T(0);
              }
            }
          }
        }
}

template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* x) {
  const std::size_t P = g.out_spatial();
  std::size_t row = 0;
  for (int c = 0; c < g.cin; ++c)
    for (int a = 0; a < g.kx; ++a)
      for (int b = 0; b < g.ky; ++b)
        for (int d = 0; d < g.kz; ++d, ++row) {
          const T* in = col + row * P;
          T* xc = x + static_cast<std::size_t>(c) * g.in_spatial();
          for (int i = 0; i < g.ox; ++i) {
            const int xi = i * g.stride - g.pad + a;
            if (xi < 0 || xi >= g.ix) continue;
            for (int j = 0; j < g.oy; ++j) {
              const int yj = j * g.stride - g.pad + b;
              if (yj < 0 || yj >= g.iy) continue;
              const T* o = in + (static_cast<std::size_t>(i) * g.oy + j) * g.oz;
              T* dst = xc + (static_cast<std::size_t>(xi) * g.iy + yj) * g.iz;
              for (int k = 0; k < g.oz; ++k) {
                const int zk = k * g.stride - g.pad + d;
                if (zk >= 0 && zk < g.iz) dst[zk] += o[k];
              }
            }
          }
        }
}

struct SparseEntry {
  std::uint32_t channel;
  int i, j, k;
};

// Nonzero inputs of one sample, or nullopt if the sample is too dense for
// the scatter path to pay off.
template <typename T>
std::optional<std::vector<SparseEntry>> sparse_entries(const T* x, const ConvGeometry& g, double max_density) {
  std::vector<SparseEntry> out;
  if (g.stride != 1 || max_density <= 0.0) return std::nullopt;
  const std::size_t total = g.in_spatial() * static_cast<std::size_t>(g.cin);
  const auto limit = static_cast<std::size_t>(max_density * static_cast<double>(total));
  std::size_t idx = 0;
  for (int c = 0; c < g.cin; ++c)
    for (int i = 0; i < g.ix; ++i)
      for (int j = 0; j < g.iy; ++j)
        for (int k = 0; k < g.iz; ++k, ++idx)
          if (x[idx] != T(0)) {
            if (out.size() >= limit) return std::nullopt;
            out.push_back({static_cast<std::uint32_t>(c), i, j, k});
          }
  return out;
}

// Visits every (output position, kernel tap) pair touched by input (i, j, k)
// for stride-1 convolutions.
template <typename Fn>
void for_each_tap(const ConvGeometry& g, const SparseEntry& e, Fn&& fn) {
  for (int a = 0; a < g.kx; ++a) {
    const int oi = e.i + g.pad - a;
    if (oi < 0 || oi >= g.ox) continue;
    for (int b = 0; b < g.ky; ++b) {
      const int oj = e.j + g.pad - b;
      if (oj < 0 || oj >= g.oy) continue;
      for (int d = 0; d < g.kz; ++d) {
        const int ok = e.k + g.pad - d;
        if (ok < 0 || ok >= g.oz) continue;
        const std::size_t tap = ((static_cast<std::size_t>(e.channel) * g.kx + a) * g.ky + b) * g.kz + d;
        const std::size_t pos = (static_cast<std::size_t>(oi) * g.oy + oj) * g.oz + ok;
        fn(tap, pos);
      }
    }
  }
}

inline std::size_t fixed_groups(int n) { return static_cast<std::size_t>(std::clamp(n, 1, 8)); }

}  // namespace detail

struct ConvOptions {
  int stride = 1;
  int pad = 0;
  unsigned threads = 1;
  /// Inputs with at most this fraction of nonzeros use the scatter path
  /// (stride 1 only). Set to 0 to force the dense im2col path.
  double sparse_density = 0.05;
};

/// 3-D cross-correlation. Kernel dims are (out channels, in channels, kx, ky, kz).
template <typename T>
Tensor5<T> conv3d(const Tensor5<T>& x, const Tensor5<T>& w, const std::vector<T>& bias, const ConvOptions& opt = {}) {
  const ConvGeometry g = conv_geometry(x, w, opt.stride, opt.pad);
  const int cout = w.n();
  require(bias.size() == static_cast<std::size_t>(cout), "conv3d: bias length must equal output channels");
  Tensor5<T> y(x.n(), cout, g.ox, g.oy, g.oz);
  const std::size_t P = g.out_spatial(), K = g.rows();
  Eigen::Map<const RowMat<T>> wm(w.data.data(), cout, static_cast<Eigen::Index>(K));

  parallel_for(static_cast<std::size_t>(x.n()), opt.threads, [&](std::size_t b) {
    const T* xs = x.sample(static_cast<int>(b));
    T* ys = y.sample(static_cast<int>(b));
    for (int co = 0; co < cout; ++co) std::fill(ys + co * P, ys + (co + 1) * P, bias[co]);
    if (const auto nz = detail::sparse_entries(xs, g, opt.sparse_density)) {
      for (const auto& e : *nz) {
        const T v = xs[((static_cast<std::size_t>(e.channel) * g.ix + e.i) * g.iy + e.j) * g.iz + e.k];
        detail::for_each_tap(g, e, [&](std::size_t tap, std::size_t pos) {
          const T* wc = w.data.data() + tap;
          for (int co = 0; co < cout; ++co) ys[co * P + pos] += v * wc[co * K];
        });
      }
      return;
    }
    std::vector<T> col(K * P);
    detail::im2col(xs, g, col.data());
    Eigen::Map<const RowMat<T>> cm(col.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
    Eigen::Map<RowMat<T>> ym(ys, cout, static_cast<Eigen::Index>(P));
    ym.noalias() += wm * cm;
  });
  return y;
}

template <typename T>
struct ConvGrads {
  Tensor5<T> input;  // empty when not requested
  Tensor5<T> kernel;
  std::vector<T> bias;
};

/// Gradients of conv3d. Kernel gradients are accumulated per fixed sample
/// group and summed in group order, so the result is independent of the
/// thread count.
template <typename T>
ConvGrads<T> conv3d_backward(const Tensor5<T>& x, const Tensor5<T>& w, const Tensor5<T>& dy, bool need_input_grad,
                             const ConvOptions& opt = {}) {
  const ConvGeometry g = conv_geometry(x, w, opt.stride, opt.pad);
  const int cout = w.n();
  require(dy.n() == x.n() && dy.c() == cout && dy.x() == g.ox && dy.y() == g.oy && dy.z() == g.oz,
          "conv3d_backward: upstream gradient has dims " + dims_string(dy.dims));
  const std::size_t P = g.out_spatial(), K = g.rows();
  ConvGrads<T> out;
  out.kernel = Tensor5<T>(w.dims);
  out.bias.assign(static_cast<std::size_t>(cout), T(0));
  if (need_input_grad) out.input = Tensor5<T>(x.dims);

  Eigen::Map<const RowMat<T>> wm(w.data.data(), cout, static_cast<Eigen::Index>(K));
  const std::size_t G = detail::fixed_groups(x.n());
  std::vector<std::vector<T>> dw(G, std::vector<T>(w.size(), T(0)));
  std::vector<std::vector<T>> db(G, std::vector<T>(static_cast<std::size_t>(cout), T(0)));

  parallel_for(G, opt.threads, [&](std::size_t grp) {
    std::vector<T> col;
    Eigen::Map<RowMat<T>> dwm(dw[grp].data(), cout, static_cast<Eigen::Index>(K));
    for (std::size_t b = grp; b < static_cast<std::size_t>(x.n()); b += G) {
      const T* xs = x.sample(static_cast<int>(b));
      const T* gs = dy.sample(static_cast<int>(b));
      Eigen::Map<const RowMat<T>> gm(gs, cout, static_cast<Eigen::Index>(P));
      // plain loop: Eigen's vectorized sum depends on pointer alignment
      for (int co = 0; co < cout; ++co) {
        T s = T(0);
        for (std::size_t p = 0; p < P; ++p) s += gs[co * P + p];
        db[grp][co] += s;
      }

      if (const auto nz = detail::sparse_entries(xs, g, opt.sparse_density)) {
        for (const auto& e : *nz) {
          const T v = xs[((static_cast<std::size_t>(e.channel) * g.ix + e.i) * g.iy + e.j) * g.iz + e.k];
          detail::for_each_tap(g, e, [&](std::size_t tap, std::size_t pos) {
            T* dwc = dw[grp].data() + tap;
            for (int co = 0; co < cout; ++co) dwc[co * K] += v * gs[co * P + pos];
          });
        }
      } else {
        col.resize(K * P);
        detail::im2col(xs, g, col.data());
        Eigen::Map<const RowMat<T>> cm(col.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
        dwm.noalias() += gm * cm.transpose();
      }
      if (need_input_grad) {
        col.resize(K * P);
        Eigen::Map<RowMat<T>> dcm(col.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
        dcm.noalias() = wm.transpose() * gm;
        detail::col2im(col.data(), g, out.input.sample(static_cast<int>(b)));
      }
    }
  });
  for (std::size_t grp = 0; grp < G; ++grp) {
    for (std::size_t i = 0; i < w.size(); ++i) out.kernel.data[i] += dw[grp][i];
    for (int co = 0; co < cout; ++co) out.bias[co] += db[grp][co];
  }
  return out;
}

// ------------------------------------------------------------ leaky relu

template <typename T>
T leaky_relu(T v, T slope) {
  return v > T(0) ? v : slope * v;
}

template <typename T>
Tensor5<T> leaky_relu(const Tensor5<T>& x, T slope) {
  Tensor5<T> y = x;
  for (auto& v : y.data) v = leaky_relu(v, slope);
  return y;
}

/// Backward from the pre-activation input.
template <typename T>
Tensor5<T> leaky_relu_backward(const Tensor5<T>& x, const Tensor5<T>& dy, T slope) {
  require(x.dims == dy.dims, "leaky_relu_backward: shape mismatch");
  Tensor5<T> dx(x.dims);
  for (std::size_t i = 0; i < x.size(); ++i) dx.data[i] = x.data[i] > T(0) ? dy.data[i] : slope * dy.data[i];
  return dx;
}

// --------------------------------------------------------------- maxpool

struct PoolCache {
  std::array<int, 5> input_dims{};
  std::vector<std::uint32_t> argmax;  // flat index within the input sample
};

inline int pool_out_dim(int in, int window, int stride) {
  require(in >= window && window > 0 && stride > 0, "maxpool3d: window larger than input");
  return (in - window) / stride + 1;
}

template <typename T>
Tensor5<T> maxpool3d(const Tensor5<T>& x, int window, int stride, PoolCache* cache = nullptr) {
  const int ox = pool_out_dim(x.x(), window, stride), oy = pool_out_dim(x.y(), window, stride),
            oz = pool_out_dim(x.z(), window, stride);
  Tensor5<T> y(x.n(), x.c(), ox, oy, oz);
  if (cache) {
    cache->input_dims = x.dims;
    cache->argmax.assign(y.size(), 0);
  }
  std::size_t o = 0;
  for (int b = 0; b < x.n(); ++b)
    for (int c = 0; c < x.c(); ++c) {
      const std::size_t base = x.index(b, c, 0, 0, 0);
      const std::size_t sbase = x.index(b, 0, 0, 0, 0);
      for (int i = 0; i < ox; ++i)
        for (int j = 0; j < oy; ++j)
          for (int k = 0; k < oz; ++k, ++o) {
            std::size_t best = base + (static_cast<std::size_t>(i * stride) * x.y() + j * stride) * x.z() + k * stride;
            for (int a = 0; a < window; ++a)
              for (int bb = 0; bb < window; ++bb)
                for (int d = 0; d < window; ++d) {
                  const std::size_t idx =
                      base + (static_cast<std::size_t>(i * stride + a) * x.y() + (j * stride + bb)) * x.z() +
                      (k * stride + d);
                  if (x.data[idx] > x.data[best]) best = idx;
                }
            y.data[o] = x.data[best];
            if (cache) cache->argmax[o] = static_cast<std::uint32_t>(best - sbase);
          }
    }
  return y;
}

template <typename T>
Tensor5<T> maxpool3d_backward(const Tensor5<T>& dy, const PoolCache& cache) {
  Tensor5<T> dx(cache.input_dims);
  require(dy.size() == cache.argmax.size(), "maxpool3d_backward: gradient does not match cache");
  const std::size_t per_out = dy.sample_size();
  for (std::size_t o = 0; o < dy.size(); ++o) {
    const std::size_t b = o / per_out;
    dx.data[b * dx.sample_size() + cache.argmax[o]] += dy.data[o];
  }
  return dx;
}

// ------------------------------------------------------------- batchnorm

template <typename T>
struct BatchNormParams {
  std::vector<T> scale, shift, running_mean, running_var;
  T eps = T(1e-5);
  T momentum = T(0.1);
};

template <typename T>
struct BatchNormCache {
  Mode mode = Mode::Train;
  Tensor5<T> xhat;
  std::vector<T> inv_std;
};

/// Per-channel normalization over batch and spatial axes. Train mode uses
/// batch statistics and updates the running estimates (unbiased variance);
/// eval mode uses the running estimates and mutates nothing.
template <typename T>
Tensor5<T> batchnorm3d(const Tensor5<T>& x, BatchNormParams<T>& p, Mode mode, BatchNormCache<T>* cache = nullptr) {
  const auto C = static_cast<std::size_t>(x.c());
  require(p.scale.size() == C && p.shift.size() == C && p.running_mean.size() == C && p.running_var.size() == C,
          "batchnorm3d: parameter length must equal channel count");
  const std::size_t S = x.spatial();
  const std::size_t M = S * static_cast<std::size_t>(x.n());
  Tensor5<T> y(x.dims);
  std::vector<T> mean(C), inv_std(C);
  for (std::size_t c = 0; c < C; ++c) {
    if (mode == Mode::Train) {
      double s = 0.0;
      for (int b = 0; b < x.n(); ++b) {
        const T* v = x.sample(b) + c * S;
        for (std::size_t i = 0; i < S; ++i) s += static_cast<double>(v[i]);
      }
      const double mu = s / static_cast<double>(M);
      double ss = 0.0;
      for (int b = 0; b < x.n(); ++b) {
        const T* v = x.sample(b) + c * S;
        for (std::size_t i = 0; i < S; ++i) {
          const double d = static_cast<double>(v[i]) - mu;
          ss += d * d;
        }
      }
      const double var = ss / static_cast<double>(M);
      mean[c] = static_cast<T>(mu);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(p.eps)));
      const double unbiased = M > 1 ? ss / static_cast<double>(M - 1) : var;
      p.running_mean[c] = static_cast<T>((1.0 - p.momentum) * p.running_mean[c] + p.momentum * mu);
      p.running_var[c] = static_cast<T>((1.0 - p.momentum) * p.running_var[c] + p.momentum * unbiased);
    } else {
      mean[c] = p.running_mean[c];
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(p.running_var[c]) + static_cast<double>(p.eps)));
    }
  }
  if (cache) {
    cache->mode = mode;
    cache->xhat = Tensor5<T>(x.dims);
    cache->inv_std = inv_std;
  }
  for (int b = 0; b < x.n(); ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const T* v = x.sample(b) + c * S;
      T* o = y.sample(b) + c * S;
      T* h = cache ? cache->xhat.sample(b) + c * S : nullptr;
      for (std::size_t i = 0; i < S; ++i) {
        const T xh = (v[i] - mean[c]) * inv_std[c];
        if (h) h[i] = xh;
        o[i] = p.scale[c] * xh + p.shift[c];
      }
    }
  return y;
}

template <typename T>
struct BatchNormGrads {
  Tensor5<T> input;
  std::vector<T> scale, shift;
};

template <typename T>
BatchNormGrads<T> batchnorm3d_backward(const Tensor5<T>& dy, const std::vector<T>& scale, const BatchNormCache<T>& cache) {
  require(dy.dims == cache.xhat.dims, "batchnorm3d_backward: gradient does not match cache");
  const auto C = static_cast<std::size_t>(dy.c());
  const std::size_t S = dy.spatial();
  const double M = static_cast<double>(S * static_cast<std::size_t>(dy.n()));
  BatchNormGrads<T> g{Tensor5<T>(dy.dims), std::vector<T>(C), std::vector<T>(C)};
  for (std::size_t c = 0; c < C; ++c) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (int b = 0; b < dy.n(); ++b) {
      const T* d = dy.sample(b) + c * S;
      const T* h = cache.xhat.sample(b) + c * S;
      for (std::size_t i = 0; i < S; ++i) {
        sum_dy += static_cast<double>(d[i]);
        sum_dy_xh += static_cast<double>(d[i]) * static_cast<double>(h[i]);
      }
    }
    g.shift[c] = static_cast<T>(sum_dy);
    g.scale[c] = static_cast<T>(sum_dy_xh);
    const T k = scale[c] * cache.inv_std[c];
    const T mean_dy = static_cast<T>(sum_dy / M), mean_dy_xh = static_cast<T>(sum_dy_xh / M);
    for (int b = 0; b < dy.n(); ++b) {
      const T* d = dy.sample(b) + c * S;
      const T* h = cache.xhat.sample(b) + c * S;
      T* o = g.input.sample(b) + c * S;
      if (cache.mode == Mode::Eval) {
        for (std::size_t i = 0; i < S; ++i) o[i] = k * d[i];
      } else {
        for (std::size_t i = 0; i < S; ++i) o[i] = k * (d[i] - mean_dy - h[i] * mean_dy_xh);
      }
    }
  }
  return g;
}

// ----------------------------------------------------------------- dense

/// y[b, o] = sum_f W[o, f] x[b, f] + bias[o], where x is the flattened sample.
template <typename T>
std::vector<T> dense(const Tensor5<T>& x, const std::vector<T>& w, const std::vector<T>& bias) {
  const std::size_t F = x.sample_size(), O = bias.size();
  require(w.size() == O * F, "dense: weight has " + std::to_string(w.size()) + " entries, expected " +
                                 std::to_string(O * F));
  std::vector<T> y(static_cast<std::size_t>(x.n()) * O);
  for (int b = 0; b < x.n(); ++b) {
    const T* xs = x.sample(b);
    for (std::size_t o = 0; o < O; ++o) {
      T acc = bias[o];
      const T* wr = w.data() + o * F;
      for (std::size_t f = 0; f < F; ++f) acc += wr[f] * xs[f];
      y[static_cast<std::size_t>(b) * O + o] = acc;
    }
  }
  return y;
}

template <typename T>
struct DenseGrads {
  Tensor5<T> input;
  std::vector<T> weight, bias;
};

template <typename T>
DenseGrads<T> dense_backward(const Tensor5<T>& x, const std::vector<T>& w, const std::vector<T>& dy) {
  const std::size_t F = x.sample_size();
  const std::size_t O = w.size() / std::max<std::size_t>(F, 1);
  require(O * F == w.size() && dy.size() == static_cast<std::size_t>(x.n()) * O, "dense_backward: shape mismatch");
  DenseGrads<T> g{Tensor5<T>(x.dims), std::vector<T>(w.size(), T(0)), std::vector<T>(O, T(0))};
  for (int b = 0; b < x.n(); ++b) {
    const T* xs = x.sample(b);
    T* dx = g.input.sample(b);
    for (std::size_t o = 0; o < O; ++o) {
      const T d = dy[static_cast<std::size_t>(b) * O + o];
      g.bias[o] += d;
      const T* wr = w.data() + o * F;
      T* gw = g.weight.data() + o * F;
      for (std::size_t f = 0; f < F; ++f) {
        gw[f] += d * xs[f];
        dx[f] += d * wr[f];
      }
    }
  }
  return g;
}

}  // namespace gluevol::nn
