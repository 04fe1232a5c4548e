#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "gluevol/nn/tensor.hpp"
#include "json.hpp"

namespace gluevol::nn {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  long step = 0;
  std::vector<std::vector<double>> m, v;
};

/// One Adam update with bias correction over a list of parameter vectors.
/// Moments are kept in double regardless of T.
template <typename T>
void adam_step(std::vector<std::vector<T>*>& params, const std::vector<const std::vector<T>*>& grads, AdamState& state,
               const AdamConfig& cfg) {
  require(params.size() == grads.size(), "adam_step: parameter and gradient lists differ in length");
  if (state.m.empty()) {
    for (auto* p : params) {
      state.m.emplace_back(p->size(), 0.0);
      state.v.emplace_back(p->size(), 0.0);
    }
  }
  require(state.m.size() == params.size(), "adam_step: optimizer state does not match parameters");
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    const auto& g = *grads[i];
    require(p.size() == g.size() && p.size() == state.m[i].size(), "adam_step: gradient shape mismatch");
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = static_cast<double>(g[k]);
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
      const double mh = m[k] / c1, vh = v[k] / c2;
      p[k] = static_cast<T>(static_cast<double>(p[k]) - cfg.learning_rate * mh / (std::sqrt(vh) + cfg.eps));
    }
  }
}

inline void to_json(nlohmann::json& j, const AdamConfig& c) {
  j = {{"learning_rate", c.learning_rate}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}};
}
inline void from_json(const nlohmann::json& j, AdamConfig& c) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
}

}  // namespace gluevol::nn
