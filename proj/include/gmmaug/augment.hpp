#pragma once

// Mixture-based contrast augmentation.
//
// A fitted mixture (mu_k, var_k) is perturbed by per-component offsets
// q_mu ~ U(-s(mu)_k, s(mu)_k), q_var ~ U(-s(var)_k, s(var)_k). Each voxel v is
// then re-expressed per component through its distance d_k = (v - mu_k) / sigma_k
// and mapped to v'_k = mu'_k + d_k sigma'_k. The per-component values are
// merged with the posterior responsibilities of the original fit, which makes
// a zero perturbation the exact identity and keeps the mapping continuous
// across tissue boundaries.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmmaug/error.hpp"
#include "gmmaug/gmm.hpp"
#include "gmmaug/population.hpp"
#include "gmmaug/preprocess.hpp"
#include "gmmaug/rng.hpp"
#include "gmmaug/volume.hpp"

namespace gmmaug {

struct Perturbation {
  std::vector<double> q_mu;
  std::vector<double> q_var;
  std::uint64_t seed = 0;
};

struct PerturbedGmm {
  GmmParams base;
  std::vector<double> means;
  std::vector<double> variances;
  /// Components whose variance + q_var fell below the floor.
  std::vector<int> clamped;

  bool order_preserved() const noexcept {
    for (std::size_t j = 1; j < means.size(); ++j)
      if (!(means[j - 1] < means[j])) return false;
    return true;
  }
};

/// Draws from an existing stream: for each component, q_mu then q_var.
inline Perturbation sample_perturbation(const PopulationStats& stats, SplitMix64& rng) {
  Perturbation q;
  for (const auto& c : stats.components) {
    q.q_mu.push_back(rng.symmetric(c.mu_std));
    q.q_var.push_back(rng.symmetric(c.var_std));
  }
  return q;
}

inline Perturbation sample_perturbation(const PopulationStats& stats, std::uint64_t seed) {
  SplitMix64 rng(seed);
  auto q = sample_perturbation(stats, rng);
  q.seed = seed;
  return q;
}

inline PerturbedGmm apply_perturbation(const GmmParams& params, const Perturbation& q,
                                       double variance_floor = kVarianceFloor) {
  const auto k = static_cast<std::size_t>(params.k);
  if (q.q_mu.size() != k || q.q_var.size() != k)
    throw Error(ErrorKind::ShapeMismatch, "perturbation has a different component count than the mixture");
  PerturbedGmm out{params, params.means, params.variances, {}};
  for (std::size_t j = 0; j < k; ++j) {
    out.means[j] += q.q_mu[j];
    const double v = params.variances[j] + q.q_var[j];
    if (v < variance_floor) {
      out.variances[j] = variance_floor;
      out.clamped.push_back(static_cast<int>(j));
    } else {
      out.variances[j] = v;
    }
  }
  return out;
}

/// mu' + ((v - mu) / sigma) * sigma'
inline double remap_component(double v, double mu, double sigma, double mu_new, double sigma_new) noexcept {
  return mu_new + ((v - mu) / sigma) * sigma_new;
}

struct RemapOptions {
  /// Use only the most probable component instead of the responsibility-weighted sum.
  bool hard_assign = false;
  bool clip_output = true;
};

inline Volume remap(const Volume& vol, const Mask& mask, const GmmParams& params, const PerturbedGmm& pert,
                    const RemapOptions& opts = {}) {
  if (mask.size() != vol.size()) throw Error(ErrorKind::ShapeMismatch, "mask length differs from volume size");
  const auto k = static_cast<std::size_t>(params.k);
  if (pert.means.size() != k || pert.variances.size() != k)
    throw Error(ErrorKind::ShapeMismatch, "perturbed mixture has a different component count");

  std::vector<double> sigma(k), sigma_new(k);
  for (std::size_t j = 0; j < k; ++j) {
    sigma[j] = std::sqrt(params.variances[j]);
    sigma_new[j] = std::sqrt(pert.variances[j]);
  }
  const detail::LogTerms terms(params);
  std::vector<double> gamma(k);

  Volume out = vol;
  for (std::size_t i = 0; i < vol.size(); ++i) {
    if (!mask[i]) continue;
    const double v = vol[i];
    terms.posterior(v, gamma);
    double result = 0.0;
    if (opts.hard_assign) {
      const auto best = static_cast<std::size_t>(std::max_element(gamma.begin(), gamma.end()) - gamma.begin());
      result = remap_component(v, params.means[best], sigma[best], pert.means[best], sigma_new[best]);
    } else {
      for (std::size_t j = 0; j < k; ++j)
        result += gamma[j] * remap_component(v, params.means[j], sigma[j], pert.means[j], sigma_new[j]);
    }
    out[i] = opts.clip_output ? std::clamp(result, 0.0, 1.0) : result;
  }
  return out;
}

struct AugmentConfig {
  EmConfig em;
  RemapOptions remap;
  /// Redraw (from the same seeded stream) until perturbed means keep their order.
  bool reject_order_inversion = false;
  int max_redraws = 1000;
};

/// A volume conditioned and fitted once, ready for any number of draws.
struct PreparedVolume {
  Volume normalized;
  Mask mask;
  GmmParams fit;
};

inline PreparedVolume prepare(const Volume& vol, const PopulationStats& stats, const AugmentConfig& cfg = {},
                              const std::optional<LabelVolume>& explicit_mask = std::nullopt) {
  stats.validate();
  Mask mask = foreground_mask(vol, explicit_mask);
  const auto& pp = stats.preprocessing;
  Volume normalized = pp.normalize == "none" ? vol : clip_normalize(vol, mask, pp.clip_lo_pct, pp.clip_hi_pct).first;
  if (pp.normalize == "none")
    for (std::size_t i = 0; i < normalized.size(); ++i)
      if (!mask[i]) normalized[i] = 0.0;
  GmmParams fit = fit_em(masked_values(normalized, mask), stats.k, cfg.em);
  return {std::move(normalized), std::move(mask), std::move(fit)};
}

struct AugmentResult {
  Volume volume;
  GmmParams fit;
  Perturbation perturbation;
  PerturbedGmm perturbed;
  int draws = 1;
};

inline AugmentResult draw(const PreparedVolume& prepared, const PopulationStats& stats, std::uint64_t seed,
                          const AugmentConfig& cfg = {}) {
  SplitMix64 rng(seed);
  Perturbation q = sample_perturbation(stats, rng);
  PerturbedGmm pert = apply_perturbation(prepared.fit, q, cfg.em.variance_floor);
  int draws = 1;
  while (cfg.reject_order_inversion && !pert.order_preserved()) {
    if (draws >= cfg.max_redraws)
      throw Error(ErrorKind::InvalidArgument,
                  "no order-preserving perturbation in " + std::to_string(draws) + " draws");
    q = sample_perturbation(stats, rng);
    pert = apply_perturbation(prepared.fit, q, cfg.em.variance_floor);
    ++draws;
  }
  q.seed = seed;
  Volume out = remap(prepared.normalized, prepared.mask, prepared.fit, pert, cfg.remap);
  return {std::move(out), prepared.fit, std::move(q), std::move(pert), draws};
}

/// mask -> normalize -> fit -> sample -> perturb -> remap.
inline AugmentResult augment_volume(const Volume& vol, const PopulationStats& stats, std::uint64_t seed,
                                    const AugmentConfig& cfg = {},
                                    const std::optional<LabelVolume>& explicit_mask = std::nullopt) {
  return draw(prepare(vol, stats, cfg, explicit_mask), stats, seed, cfg);
}

/// Sidecar written next to each augmented image.
inline nlohmann::json provenance_json(const AugmentResult& r) {
  return {{"seed", r.perturbation.seed},
          {"fit", r.fit},
          {"perturbation", {{"q_mu", r.perturbation.q_mu}, {"q_var", r.perturbation.q_var}}},
          {"clamped_variances", r.perturbed.clamped}};
}

}  // namespace gmmaug
