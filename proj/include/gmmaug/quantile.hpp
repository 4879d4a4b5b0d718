#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "gmmaug/error.hpp"

namespace gmmaug {

/// Percentile of already-sorted data, linear interpolation between order
/// statistics (position p/100 * (n-1)), the same rule as numpy's default.
inline double percentile_sorted(std::span<const double> sorted, double pct) {
  if (sorted.empty()) throw Error(ErrorKind::InsufficientData, "percentile of empty sample");
  if (!(pct >= 0.0 && pct <= 100.0)) throw Error(ErrorKind::InvalidArgument, "percentile outside [0,100]");
  const double pos = pct / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline double percentile(std::span<const double> values, double pct) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return percentile_sorted(sorted, pct);
}

}  // namespace gmmaug
