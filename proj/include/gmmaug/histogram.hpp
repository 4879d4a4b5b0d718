#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "gmmaug/error.hpp"

namespace gmmaug {

struct Histogram {
  std::vector<double> centers;
  std::vector<std::size_t> counts;
};

/// Fixed-width bins over [0, 1]. Bin b covers [b/bins, (b+1)/bins); the last
/// bin also takes 1.0, and out-of-range values land in the edge bins.
inline Histogram unit_histogram(std::span<const double> values, std::size_t bins) {
  if (bins == 0) throw Error(ErrorKind::InvalidArgument, "histogram needs at least one bin");
  Histogram h;
  h.counts.assign(bins, 0);
  const double width = 1.0 / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b) h.centers.push_back((static_cast<double>(b) + 0.5) * width);
  const auto last = static_cast<double>(bins - 1);
  for (double v : values) {
    const double pos = std::clamp(std::floor(v * static_cast<double>(bins)), 0.0, last);
    ++h.counts[static_cast<std::size_t>(pos)];
  }
  return h;
}

}  // namespace gmmaug
