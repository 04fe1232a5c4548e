#pragma once

#include <cstddef>
#include <vector>

#include "gluevol/core/error.hpp"

namespace gluevol::nn {

template <typename T>
struct LossResult {
  double value = 0.0;
  std::vector<T> grad;  // d loss / d pred
};

/// Mean squared error and its gradient 2 (pred - target) / N.
template <typename T>
LossResult<T> loss_mse(const std::vector<T>& pred, const std::vector<T>& target) {
  if (pred.size() != target.size())
    throw Error(ErrorCode::LengthMismatch, "loss_mse: " + std::to_string(pred.size()) + " predictions vs " +
                                               std::to_string(target.size()) + " targets");
  if (pred.empty()) throw Error(ErrorCode::LengthMismatch, "loss_mse: empty input");
  LossResult<T> r;
  r.grad.resize(pred.size());
  const double n = static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    r.value += d * d;
    r.grad[i] = static_cast<T>(2.0 * d / n);
  }
  r.value /= n;
  return r;
}

}  // namespace gluevol::nn
