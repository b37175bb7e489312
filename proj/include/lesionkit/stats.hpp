#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "lesionkit/error.hpp"

namespace lesionkit::stats {

// Middle order statistic for odd counts, mean of the two middle ones for even.
inline double median(std::span<const double> xs) {
  if (xs.empty()) throw ArgumentError("median of empty sequence");
  std::vector<double> v(xs.begin(), xs.end());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Linear interpolation between closest ranks (q in [0, 100]).
inline double percentile(std::span<const double> xs, double q) {
  if (xs.empty()) throw ArgumentError("percentile of empty sequence");
  std::vector<double> v(xs.begin(), xs.end());
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

inline std::pair<double, double> range(std::span<const double> xs) {
  if (xs.empty()) throw ArgumentError("range of empty sequence");
  const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
  return {*lo, *hi};
}

}  // namespace lesionkit::stats
