#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "qdet/numerics.hpp"

namespace qdet_test {

struct MeanSe {
  double mean = 0.0, se = 0.0;
};

inline MeanSe mean_se(std::span<const double> v) {
  MeanSe m;
  const double n = static_cast<double>(v.size());
  m.mean = qdet::pairwise_sum(v) / n;
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    sq[i] = (v[i] - m.mean) * (v[i] - m.mean);
  m.se = std::sqrt(qdet::pairwise_sum(sq) / (n * (n - 1.0)));
  return m;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// least-squares slope of y on x through the origin-free fit
inline double regression_slope(std::span<const double> x,
                               std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace qdet_test
