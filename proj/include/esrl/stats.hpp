#pragma once

#include <algorithm>
#include <vector>

#include "esrl/common.hpp"

namespace esrl {

// Linear-interpolation quantile on unsorted data (numpy's default convention).
inline double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw ValidationError("quantile of empty data");
  if (q < 0 || q > 1) throw ValidationError("quantile level must lie in [0,1]");
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= xs.size()) return xs.back();
  const double frac = pos - static_cast<double>(lo);
  return xs[lo] + (xs[lo + 1] - xs[lo]) * frac;
}

inline double median(const std::vector<double>& xs) { return quantile(xs, 0.5); }

struct Interval {
  double lo = 0, hi = 0;
};

// Central interval holding `coverage` of the mass, e.g. 0.975 -> the
// [1.25%, 98.75%] quantiles.
inline Interval percentile_interval(const std::vector<double>& xs, double coverage) {
  if (coverage <= 0 || coverage > 1) throw ValidationError("coverage must lie in (0,1]");
  const double tail = (1.0 - coverage) / 2.0;
  return {quantile(xs, tail), quantile(xs, 1.0 - tail)};
}

inline double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) throw ValidationError("mean of empty data");
  double s = 0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

}  // namespace esrl
