#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "gluevol/core/error.hpp"
#include "gluevol/core/rng.hpp"
#include "gluevol/nn/adam.hpp"
#include "gluevol/nn/loss.hpp"
#include "gluevol/nn/rnet.hpp"
#include "gluevol/voxel/grid.hpp"
#include "json.hpp"

namespace gluevol::nn {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 128;
  AdamConfig adam{};
  std::uint64_t seed = 0;
  /// Train on (v - mean) / std of the training targets instead of raw mm^3.
  bool standardize_targets = false;
  unsigned threads = 1;
  std::string profile = "paper";

  void validate() const {
    if (epochs < 0 || batch_size <= 0 || !(adam.learning_rate > 0.0))
      throw Error(ErrorCode::Config, "epochs must be >= 0, batch size and learning rate positive");
  }
};

/// Grids and their volume targets in mm^3.
struct GridSet {
  std::vector<voxel::VoxelGrid> grids;
  std::vector<double> targets;

  std::size_t size() const { return grids.size(); }
  bool empty() const { return grids.empty(); }
};

struct EpochRecord {
  int epoch = 0;
  double train_mse = 0.0;  // (mm^3)^2
  double test_mse = 0.0;   // (mm^3)^2, NaN without a test set
  double wall_seconds = 0.0;
};

struct History {
  int epochs = 0;
  int batch_size = 0;
  double learning_rate = 0.0;
  std::vector<EpochRecord> records;
};

template <typename T>
Tensor5<T> make_batch(const GridSet& set, const std::vector<std::size_t>& idx, const NetConfig& cfg) {
  Tensor5<T> x(static_cast<int>(idx.size()), 1, cfg.input[0], cfg.input[1], cfg.input[2]);
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const auto& g = set.grids.at(idx[b]);
    require(g.nx == cfg.input[0] && g.ny == cfg.input[1] && g.nz == cfg.input[2],
            "grid dims do not match the network input");
    T* s = x.sample(static_cast<int>(b));
    for (int i = 0; i < g.nx; ++i)
      for (int j = 0; j < g.ny; ++j)
        for (int k = 0; k < g.nz; ++k)
          if (g.get(i, j, k)) s[(static_cast<std::size_t>(i) * g.ny + j) * g.nz + k] = T(1);
  }
  return x;
}

struct EvalResult {
  double mse = 0.0;  // (mm^3)^2
  std::vector<double> predictions;
  std::vector<double> truth;

  /// Sample order by descending ground truth (stable).
  std::vector<std::size_t> order_by_truth() const {
    std::vector<std::size_t> o(truth.size());
    std::iota(o.begin(), o.end(), 0);
    std::stable_sort(o.begin(), o.end(), [&](std::size_t a, std::size_t b) { return truth[a] > truth[b]; });
    return o;
  }
};

/// Predictions in mm^3 using eval-mode batchnorm.
template <typename T>
std::vector<double> predict(const ModelWeights<T>& w, const GridSet& set, unsigned threads = 1, int chunk = 32) {
  std::vector<double> out;
  out.reserve(set.size());
  for (std::size_t start = 0; start < set.size(); start += static_cast<std::size_t>(chunk)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(set.size(), start + chunk); ++i) idx.push_back(i);
    const auto raw = rnet_forward(w, make_batch<T>(set, idx, w.config), Mode::Eval, nullptr, nullptr, threads);
    for (T r : raw) out.push_back(w.to_volume(r));
  }
  return out;
}

inline double mse(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.size() != truth.size()) throw Error(ErrorCode::LengthMismatch, "mse: length mismatch");
  if (pred.empty()) throw Error(ErrorCode::EmptySplit, "mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

template <typename T>
EvalResult evaluate(const ModelWeights<T>& w, const GridSet& test, unsigned threads = 1) {
  if (test.empty()) throw Error(ErrorCode::EmptySplit, "evaluate: empty test set");
  EvalResult r;
  r.predictions = predict(w, test, threads);
  r.truth = test.targets;
  r.mse = mse(r.predictions, r.truth);
  return r;
}

/// MSE of always predicting the mean of `reference` on `truth`.
inline double mean_predictor_mse(const std::vector<double>& reference, const std::vector<double>& truth) {
  if (reference.empty()) throw Error(ErrorCode::EmptySplit, "mean predictor needs targets");
  const double m = std::accumulate(reference.begin(), reference.end(), 0.0) / static_cast<double>(reference.size());
  return mse(std::vector<double>(truth.size(), m), truth);
}

template <typename T>
struct TrainResult {
  ModelWeights<T> weights;
  History history;
};

/// Minibatch Adam on MSE with per-epoch reshuffling. The test set, when
/// given, is only evaluated for the history. Training arithmetic is in T;
/// the returned weights are exactly representable in T.
template <typename T = float>
TrainResult<T> train(const GridSet& train_set, const GridSet* test_set, const NetConfig& net, const TrainConfig& tc) {
  tc.validate();
  if (train_set.empty()) throw Error(ErrorCode::EmptySplit, "train: empty training split");
  if (train_set.targets.size() != train_set.grids.size())
    throw Error(ErrorCode::LengthMismatch, "train: grids and targets differ in length");

  TrainResult<T> out{init_weights<double>(net, derive_seed(tc.seed, {0x77})).template cast<T>(), {}};
  auto& w = out.weights;
  out.history.epochs = tc.epochs;
  out.history.batch_size = tc.batch_size;
  out.history.learning_rate = tc.adam.learning_rate;

  double shift = 0.0, scale = 1.0;
  if (tc.standardize_targets) {
    const double n = static_cast<double>(train_set.size());
    shift = std::accumulate(train_set.targets.begin(), train_set.targets.end(), 0.0) / n;
    double ss = 0.0;
    for (double t : train_set.targets) ss += (t - shift) * (t - shift);
    scale = std::sqrt(ss / n);
    if (!(scale > 0.0)) scale = 1.0;
  }
  w.at(w.target_shift()).value[0] = static_cast<T>(shift);
  w.at(w.target_scale()).value[0] = static_cast<T>(scale);
  // store the rounded values so predictions use exactly what is saved
  shift = static_cast<double>(w.at(w.target_shift()).value[0]);
  scale = static_cast<double>(w.at(w.target_scale()).value[0]);

  std::vector<std::vector<T>*> params;
  std::vector<std::size_t> trainable;
  for (std::size_t i = 0; i < w.params.size(); ++i)
    if (w.params[i].trainable) {
      params.push_back(&w.params[i].value);
      trainable.push_back(i);
    }
  AdamState state;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(derive_seed(tc.seed, {0x5348, static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tc.batch_size)) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(
                                                             std::min(order.size(), start + tc.batch_size)));
      std::vector<T> target(idx.size());
      for (std::size_t b = 0; b < idx.size(); ++b)
        target[b] = static_cast<T>((train_set.targets[idx[b]] - shift) / scale);
      ForwardCache<T> cache;
      const auto pred = rnet_forward(w, make_batch<T>(train_set, idx, net), Mode::Train, &cache, &w, tc.threads);
      auto loss = loss_mse(pred, target);
      if (!std::isfinite(loss.value)) throw Error(ErrorCode::NumericFailure, "non-finite loss at epoch " + std::to_string(epoch));
      loss_sum += loss.value * static_cast<double>(idx.size());
      const auto grads = rnet_backward(w, cache, loss.grad, tc.threads);
      std::vector<const std::vector<T>*> g;
      for (std::size_t i : trainable) g.push_back(&grads[i]);
      adam_step(params, g, state, tc.adam);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_mse = loss_sum / static_cast<double>(order.size()) * scale * scale;
    rec.test_mse = test_set && !test_set->empty() ? evaluate(w, *test_set, tc.threads).mse : std::nan("");
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.history.records.push_back(rec);
  }
  return out;
}

inline void write_history_csv(const std::filesystem::path& path, const History& h) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::Io, "cannot open " + path.string());
  os << "# epochs=" << h.epochs << " batch_size=" << h.batch_size << " learning_rate=" << h.learning_rate << "\n";
  os << "epoch,train_mse,test_mse,wall_seconds\n";
  os.precision(10);
  for (const auto& r : h.records) os << r.epoch << ',' << r.train_mse << ',' << r.test_mse << ',' << r.wall_seconds << '\n';
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"adam", c.adam},
       {"standardize_targets", c.standardize_targets},
       {"profile", c.profile}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("adam")) c.adam = j.at("adam").get<AdamConfig>();
  c.standardize_targets = j.value("standardize_targets", c.standardize_targets);
  c.profile = j.value("profile", c.profile);
}

}  // namespace gluevol::nn
