#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "gluevol/core/error.hpp"

namespace gluevol::nn {

/// 1 - SSE / SST around the mean of `truth`.
inline double r_squared(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.size() != truth.size() || truth.empty()) throw Error(ErrorCode::LengthMismatch, "r_squared: bad lengths");
  const double m = std::accumulate(truth.begin(), truth.end(), 0.0) / static_cast<double>(truth.size());
  double sse = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    sse += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    sst += (truth[i] - m) * (truth[i] - m);
  }
  return sst > 0.0 ? 1.0 - sse / sst : 0.0;
}

/// Ranks starting at 1, ties get their average rank.
inline std::vector<double> fractional_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> o(v.size());
  std::iota(o.begin(), o.end(), 0);
  std::stable_sort(o.begin(), o.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < o.size();) {
    std::size_t j = i;
    while (j + 1 < o.size() && v[o[j + 1]] == v[o[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[o[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw Error(ErrorCode::LengthMismatch, "pearson: bad lengths");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n, mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return saa > 0.0 && sbb > 0.0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

/// Spearman rank correlation with tie-averaged ranks.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(fractional_ranks(a), fractional_ranks(b));
}

}  // namespace gluevol::nn
