#pragma once

// One-dimensional Gaussian mixture fitted by expectation-maximization.
//
// All density work happens in log space: each E-step forms
// log(pi_k) + log N(v | mu_k, var_k) per component and normalizes with
// log-sum-exp, so points far in the tails of every component still get a
// proper posterior. Components are returned sorted by ascending mean, which
// for skull-stripped T1w data gives the CSF < GM < WM order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmmaug/error.hpp"
#include "gmmaug/quantile.hpp"
#include "gmmaug/rng.hpp"

namespace gmmaug {

inline constexpr double kVarianceFloor = 1e-8;

struct EmConfig {
  /// Stop once |LL_t - LL_{t-1}| < tol * |LL_{t-1}|.
  double tol = 1e-6;
  int max_iter = 500;
  double variance_floor = kVarianceFloor;
  /// Inputs longer than this are subsampled (without replacement) before
  /// fitting; 0 disables subsampling.
  std::size_t subsample_cap = 2'000'000;
  std::uint64_t subsample_seed = 0;
  /// Called with (iteration, log-likelihood) for the parameters entering each
  /// E-step; the last call describes the returned parameters.
  std::function<void(int, double)> on_iteration;
};

struct GmmParams {
  int k = 0;
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> variances;
  double log_likelihood = 0.0;
  int iterations = 0;

  double stddev(int j) const { return std::sqrt(variances[static_cast<std::size_t>(j)]); }

  /// Throws InvalidArgument unless the structural invariants hold.
  void validate(double variance_floor = kVarianceFloor) const {
    const auto n = static_cast<std::size_t>(k);
    if (k < 1 || weights.size() != n || means.size() != n || variances.size() != n)
      throw Error(ErrorKind::InvalidArgument, "mixture parameter arrays do not match k");
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!(weights[j] >= 0.0) || !std::isfinite(means[j]) || !(variances[j] >= variance_floor) ||
          !std::isfinite(variances[j]))
        throw Error(ErrorKind::InvalidArgument, "invalid mixture component " + std::to_string(j));
      total += weights[j];
    }
    if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorKind::InvalidArgument, "mixture weights do not sum to 1");
  }
};

inline void to_json(nlohmann::json& j, const GmmParams& p) {
  j = nlohmann::json{{"k", p.k},
                     {"weights", p.weights},
                     {"means", p.means},
                     {"variances", p.variances},
                     {"log_likelihood", p.log_likelihood},
                     {"iterations", p.iterations}};
}

inline void from_json(const nlohmann::json& j, GmmParams& p) {
  try {
    j.at("k").get_to(p.k);
    j.at("weights").get_to(p.weights);
    j.at("means").get_to(p.means);
    j.at("variances").get_to(p.variances);
    p.log_likelihood = j.value("log_likelihood", 0.0);
    p.iterations = j.value("iterations", 0);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("malformed mixture JSON: ") + e.what());
  }
  p.validate();
}

/// Row-major n x k posterior matrix.
struct Responsibilities {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  double operator()(std::size_t r, std::size_t c) const noexcept { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const noexcept { return {data.data() + r * cols, cols}; }
};

namespace detail {

/// Per-component constants so log(pi_k N(v|mu_k,var_k)) = offset_k - (v-mu_k)^2 * half_precision_k.
struct LogTerms {
  std::vector<double> offset;
  std::vector<double> half_precision;
  std::span<const double> means;

  explicit LogTerms(const GmmParams& p) : offset(p.means.size()), half_precision(p.means.size()), means(p.means) {
    for (std::size_t j = 0; j < offset.size(); ++j) {
      offset[j] = std::log(p.weights[j]) - 0.5 * std::log(2.0 * std::numbers::pi * p.variances[j]);
      half_precision[j] = 0.5 / p.variances[j];
    }
  }

  /// Writes log-joint terms into `out` and returns log of their sum.
  double evaluate(double v, std::span<double> out) const noexcept {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < out.size(); ++j) {
      const double d = v - means[j];
      out[j] = offset[j] - d * d * half_precision[j];
      peak = std::max(peak, out[j]);
    }
    if (peak == -std::numeric_limits<double>::infinity()) return peak;
    double sum = 0.0;
    for (double t : out) sum += std::exp(t - peak);
    return peak + std::log(sum);
  }

  /// Writes posteriors p(k | v) into `out` and returns the log mixture density.
  /// Normalizing by the explicit sum makes exact ties split exactly evenly.
  double posterior(double v, std::span<double> out) const noexcept {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < out.size(); ++j) {
      const double d = v - means[j];
      out[j] = offset[j] - d * d * half_precision[j];
      peak = std::max(peak, out[j]);
    }
    double sum = 0.0;
    for (double& t : out) sum += (t = std::exp(t - peak));
    for (double& t : out) t /= sum;
    return peak + std::log(sum);
  }
};

/// Neumaier-compensated running sum; keeps the log-likelihood accurate enough
/// that EM monotonicity is observable on 10^6-point samples.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    comp_ += std::abs(sum_) >= std::abs(x) ? (sum_ - t) + x : (x - t) + sum_;
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline void sort_components(GmmParams& p) {
  std::vector<std::size_t> order(static_cast<std::size_t>(p.k));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (p.means[a] != p.means[b]) return p.means[a] < p.means[b];
    return p.variances[a] < p.variances[b];
  });
  GmmParams sorted = p;
  for (std::size_t j = 0; j < order.size(); ++j) {
    sorted.weights[j] = p.weights[order[j]];
    sorted.means[j] = p.means[order[j]];
    sorted.variances[j] = p.variances[order[j]];
  }
  p = std::move(sorted);
}

/// Seeded sample of `cap` values without replacement (partial Fisher-Yates),
/// returned in original order so the result does not depend on draw order.
inline std::vector<double> subsample(std::span<const double> values, std::size_t cap, std::uint64_t seed) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < cap; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(values.size() - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  std::vector<double> out(cap);
  for (std::size_t i = 0; i < cap; ++i) out[i] = values[idx[i]];
  return out;
}

}  // namespace detail

/// Sum over values of log sum_k pi_k N(v | mu_k, var_k).
inline double log_likelihood(const GmmParams& params, std::span<const double> values) {
  const detail::LogTerms terms(params);
  std::vector<double> scratch(static_cast<std::size_t>(params.k));
  detail::CompensatedSum total;
  for (double v : values) total.add(terms.evaluate(v, scratch));
  return total.value();
}

/// Posterior p(component | v) for every value.
inline Responsibilities responsibilities(const GmmParams& params, std::span<const double> values) {
  const auto k = static_cast<std::size_t>(params.k);
  const detail::LogTerms terms(params);
  Responsibilities out{values.size(), k, std::vector<double>(values.size() * k)};
  for (std::size_t r = 0; r < values.size(); ++r) {
    terms.posterior(values[r], std::span<double>(out.data.data() + r * k, k));
  }
  return out;
}

/// Maximum-likelihood k-component mixture via EM.
///
/// Initialization is deterministic: means at equally spaced quantiles
/// (25/50/75th for k = 3), every variance = sample variance / k^2, uniform
/// weights.
inline GmmParams fit_em(std::span<const double> input, int k = 3, const EmConfig& cfg = {}) {
  if (k < 1) throw Error(ErrorKind::InvalidArgument, "component count must be >= 1");
  const auto kk = static_cast<std::size_t>(k);
  if (input.size() < 10 * kk)
    throw Error(ErrorKind::InsufficientData,
                std::to_string(input.size()) + " samples is fewer than 10 per component");
  for (double v : input)
    if (!std::isfinite(v)) throw Error(ErrorKind::InvalidArgument, "non-finite sample");

  std::vector<double> owned;
  std::span<const double> values = input;
  if (cfg.subsample_cap > 0 && input.size() > cfg.subsample_cap) {
    if (cfg.subsample_cap < 10 * kk) throw Error(ErrorKind::InvalidArgument, "subsample cap below 10 per component");
    owned = detail::subsample(input, cfg.subsample_cap, cfg.subsample_seed);
    values = owned;
  }
  const std::size_t n = values.size();
  const double floor = cfg.variance_floor;

  GmmParams p;
  p.k = k;
  {
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    double mean = 0.0;
    for (double v : sorted) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : sorted) ss += (v - mean) * (v - mean);
    const double init_var = std::max(ss / static_cast<double>(n) / static_cast<double>(k * k), floor);
    for (std::size_t j = 0; j < kk; ++j) {
      p.means.push_back(percentile_sorted(sorted, 100.0 * static_cast<double>(j + 1) / static_cast<double>(k + 1)));
      p.variances.push_back(init_var);
      p.weights.push_back(1.0 / static_cast<double>(k));
    }
  }

  std::vector<double> resp(n * kk);
  std::vector<double> mass(kk);
  double previous_ll = 0.0;
  int iter = 0;
  for (;; ++iter) {
    // E-step: posteriors and log-likelihood of the current parameters.
    const detail::LogTerms terms(p);
    detail::CompensatedSum ll;
    for (std::size_t r = 0; r < n; ++r) {
      ll.add(terms.posterior(values[r], std::span<double>(resp.data() + r * kk, kk)));
    }
    const double current_ll = ll.value();
    if (cfg.on_iteration) cfg.on_iteration(iter, current_ll);

    if (iter > 0 && std::abs(current_ll - previous_ll) < cfg.tol * std::abs(previous_ll)) {
      p.log_likelihood = current_ll;
      break;
    }
    if (iter >= cfg.max_iter) {
      p.log_likelihood = current_ll;
      break;
    }
    previous_ll = current_ll;

    // M-step.
    std::fill(mass.begin(), mass.end(), 0.0);
    std::vector<double> weighted_sum(kk, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < kk; ++j) {
        const double g = resp[r * kk + j];
        mass[j] += g;
        weighted_sum[j] += g * values[r];
      }
    }
    for (std::size_t j = 0; j < kk; ++j) {
      if (!(mass[j] >= 1e-12))
        throw Error(ErrorKind::DegenerateComponent,
                    "component " + std::to_string(j) + " lost all responsibility mass");
      p.means[j] = weighted_sum[j] / mass[j];
    }
    std::vector<double> weighted_ss(kk, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < kk; ++j) {
        const double d = values[r] - p.means[j];
        weighted_ss[j] += resp[r * kk + j] * d * d;
      }
    }
    for (std::size_t j = 0; j < kk; ++j) {
      p.variances[j] = std::max(weighted_ss[j] / mass[j], floor);
      p.weights[j] = mass[j] / static_cast<double>(n);
    }
  }

  p.iterations = iter;
  detail::sort_components(p);
  return p;
}

}  // namespace gmmaug
