#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "gmmaug/error.hpp"
#include "gmmaug/quantile.hpp"
#include "gmmaug/volume.hpp"

namespace gmmaug {

struct ClipNormReport {
  double p_low = 0.0;
  double p_high = 0.0;
  std::pair<double, double> applied_range{0.0, 1.0};
};

/// Clips masked intensities to their [lo_pct, hi_pct] percentiles (computed
/// over the mask only) and maps that interval affinely onto [0, 1].
/// Voxels outside the mask are set to 0.
inline std::pair<Volume, ClipNormReport> clip_normalize(const Volume& vol, const Mask& mask, double lo_pct = 1.0,
                                                        double hi_pct = 99.0) {
  if (!(lo_pct >= 0.0 && lo_pct < hi_pct && hi_pct <= 100.0))
    throw Error(ErrorKind::InvalidArgument, "clip percentiles must satisfy 0 <= lo < hi <= 100");
  auto values = masked_values(vol, mask);
  if (values.empty()) throw Error(ErrorKind::EmptyMask, "cannot normalize an empty mask");
  std::sort(values.begin(), values.end());

  ClipNormReport report;
  report.p_low = percentile_sorted(values, lo_pct);
  report.p_high = percentile_sorted(values, hi_pct);
  if (!(report.p_high > report.p_low))
    throw Error(ErrorKind::DegenerateIntensity, "clip percentiles coincide; intensity is constant under the mask");

  const double range = report.p_high - report.p_low;
  Volume out(vol.dims(), vol.spacing());
  for (std::size_t i = 0; i < vol.size(); ++i) {
    if (!mask[i]) continue;
    const double clipped = std::clamp(vol[i], report.p_low, report.p_high);
    // Clamp again so round-off can never step outside [0, 1].
    out[i] = std::clamp((clipped - report.p_low) / range, 0.0, 1.0);
  }
  return {std::move(out), report};
}

/// Robust z-score: (v - median) / sd, where sd is the population standard
/// deviation of the masked values lying within the 10th..90th percentiles.
inline Volume robust_zscore(const Volume& vol, const Mask& mask) {
  auto values = masked_values(vol, mask);
  if (values.empty()) throw Error(ErrorKind::EmptyMask, "cannot normalize an empty mask");
  std::sort(values.begin(), values.end());

  const double median = percentile_sorted(values, 50.0);
  const double p10 = percentile_sorted(values, 10.0);
  const double p90 = percentile_sorted(values, 90.0);

  const auto first = std::lower_bound(values.begin(), values.end(), p10);
  const auto last = std::upper_bound(values.begin(), values.end(), p90);
  const auto n = static_cast<double>(last - first);
  double mean = 0.0;
  for (auto it = first; it != last; ++it) mean += *it;
  mean /= n;
  double ss = 0.0;
  for (auto it = first; it != last; ++it) ss += (*it - mean) * (*it - mean);
  const double sd = std::sqrt(ss / n);
  if (!(sd > 0.0)) throw Error(ErrorKind::DegenerateIntensity, "inner-percentile standard deviation is zero");

  Volume out(vol.dims(), vol.spacing());
  for (std::size_t i = 0; i < vol.size(); ++i)
    if (mask[i]) out[i] = (vol[i] - median) / sd;
  return out;
}

}  // namespace gmmaug
