#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmmaug/error.hpp"
#include "gmmaug/gmm.hpp"
#include "gmmaug/preprocess.hpp"
#include "gmmaug/volume.hpp"

namespace gmmaug {

/// How each corpus image is conditioned before its mixture fit.
struct Preprocessing {
  double clip_lo_pct = 1.0;
  double clip_hi_pct = 99.0;
  /// "minmax01": percentile clip then map to [0,1].
  /// "none": use masked intensities as stored (inputs already on [0,1]).
  std::string normalize = "minmax01";
};

struct ComponentSpread {
  double mu_mean = 0.0;
  double mu_std = 0.0;
  double var_mean = 0.0;
  double var_std = 0.0;
};

/// Typical variation of each mixture component across a corpus.
struct PopulationStats {
  int k = 0;
  std::vector<ComponentSpread> components;
  int n_images = 0;
  Preprocessing preprocessing;

  void validate() const {
    if (k < 1 || components.size() != static_cast<std::size_t>(k))
      throw Error(ErrorKind::InvalidStats, "component list does not match k");
    if (n_images < 2) throw Error(ErrorKind::InvalidStats, "n_images must be >= 2");
    for (std::size_t j = 0; j < components.size(); ++j) {
      const auto& c = components[j];
      if (!std::isfinite(c.mu_mean) || !std::isfinite(c.var_mean) || !(c.mu_std >= 0.0) || !(c.var_std >= 0.0) ||
          !std::isfinite(c.mu_std) || !std::isfinite(c.var_std))
        throw Error(ErrorKind::InvalidStats, "invalid spread for component " + std::to_string(j));
      if (j > 0 && components[j - 1].mu_mean > c.mu_mean)
        throw Error(ErrorKind::InvalidStats, "components not ascending in mu_mean");
    }
    const auto& pp = preprocessing;
    if (!(pp.clip_lo_pct >= 0.0 && pp.clip_lo_pct < pp.clip_hi_pct && pp.clip_hi_pct <= 100.0))
      throw Error(ErrorKind::InvalidStats, "invalid clip percentiles");
    if (pp.normalize != "minmax01" && pp.normalize != "none")
      throw Error(ErrorKind::InvalidStats, "unknown normalize mode \"" + pp.normalize + "\"");
  }
};

inline void to_json(nlohmann::json& j, const PopulationStats& s) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : s.components)
    comps.push_back({{"mu_mean", c.mu_mean}, {"mu_std", c.mu_std}, {"var_mean", c.var_mean}, {"var_std", c.var_std}});
  j = nlohmann::json{{"k", s.k},
                     {"components", comps},
                     {"n_images", s.n_images},
                     {"preprocessing",
                      {{"clip_lo_pct", s.preprocessing.clip_lo_pct},
                       {"clip_hi_pct", s.preprocessing.clip_hi_pct},
                       {"normalize", s.preprocessing.normalize}}}};
}

inline void from_json(const nlohmann::json& j, PopulationStats& s) {
  try {
    if (!j.is_object()) throw Error(ErrorKind::InvalidStats, "stats document is not an object");
    j.at("k").get_to(s.k);
    s.components.clear();
    for (const auto& c : j.at("components")) {
      s.components.push_back({c.at("mu_mean").get<double>(), c.at("mu_std").get<double>(),
                              c.at("var_mean").get<double>(), c.at("var_std").get<double>()});
    }
    j.at("n_images").get_to(s.n_images);
    const auto& pp = j.at("preprocessing");
    pp.at("clip_lo_pct").get_to(s.preprocessing.clip_lo_pct);
    pp.at("clip_hi_pct").get_to(s.preprocessing.clip_hi_pct);
    pp.at("normalize").get_to(s.preprocessing.normalize);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidStats, e.what());
  }
  s.validate();
}

inline PopulationStats load_stats(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidStats, path.string() + ": " + e.what());
  }
  return j.get<PopulationStats>();
}

inline void save_stats(const PopulationStats& stats, const std::filesystem::path& path) {
  stats.validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  out << nlohmann::json(stats).dump(2) << '\n';
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

/// Masks, conditions and fits one volume the way the corpus statistics expect.
inline GmmParams fit_volume(const Volume& vol, const Mask& mask, int k, const Preprocessing& pp, const EmConfig& cfg) {
  if (pp.normalize == "none") return fit_em(masked_values(vol, mask), k, cfg);
  if (pp.normalize != "minmax01") throw Error(ErrorKind::InvalidArgument, "unknown normalize mode " + pp.normalize);
  const auto [normalized, report] = clip_normalize(vol, mask, pp.clip_lo_pct, pp.clip_hi_pct);
  return fit_em(masked_values(normalized, mask), k, cfg);
}

struct PopulationOptions {
  Preprocessing preprocessing;
  /// Worker threads for the per-image fits; results do not depend on it.
  unsigned threads = 1;
  /// Receives (input index, error) for every skipped image.
  std::function<void(std::size_t, const Error&)> on_skip;
};

struct PopulationResult {
  PopulationStats stats;
  std::vector<std::optional<GmmParams>> fits;  // one per input, empty if skipped
  std::size_t skipped = 0;
};

/// Aggregates already-computed per-image fits: sample mean and sample
/// standard deviation (n - 1 denominator) of each component's mean and
/// variance. Values are summed in sorted order so the result is independent
/// of corpus order.
inline PopulationStats aggregate_fits(const std::vector<GmmParams>& fits, int k, const Preprocessing& pp) {
  if (fits.size() < 2) throw Error(ErrorKind::InsufficientData, "need at least 2 successful fits");
  const auto n = static_cast<double>(fits.size());
  auto mean_sd = [n](std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const double ref = xs.front();
    double offset = 0.0;
    for (double x : xs) offset += x - ref;
    offset /= n;
    const double mean = ref + offset;
    std::vector<double> sq;
    for (double x : xs) sq.push_back((x - ref - offset) * (x - ref - offset));
    std::sort(sq.begin(), sq.end());
    double ss = 0.0;
    for (double x : sq) ss += x;
    return std::pair{mean, std::sqrt(ss / (n - 1.0))};
  };

  PopulationStats stats;
  stats.k = k;
  stats.n_images = static_cast<int>(fits.size());
  stats.preprocessing = pp;
  for (std::size_t j = 0; j < static_cast<std::size_t>(k); ++j) {
    std::vector<double> mus, vars;
    for (const auto& f : fits) {
      mus.push_back(f.means[j]);
      vars.push_back(f.variances[j]);
    }
    ComponentSpread c;
    std::tie(c.mu_mean, c.mu_std) = mean_sd(std::move(mus));
    std::tie(c.var_mean, c.var_std) = mean_sd(std::move(vars));
    stats.components.push_back(c);
  }
  return stats;
}

/// Fits every volume (foreground = intensity > 0) and summarizes the spread
/// of the component parameters. Images whose preprocessing or fit fails are
/// skipped and counted.
inline PopulationResult estimate_population_detailed(const std::vector<Volume>& volumes, int k, const EmConfig& cfg,
                                                     const PopulationOptions& opts = {}) {
  if (volumes.size() < 2) throw Error(ErrorKind::InsufficientData, "need at least 2 volumes");
  PopulationResult result;
  result.fits.resize(volumes.size());
  std::vector<std::optional<Error>> errors(volumes.size());

  auto work = [&](std::size_t i) {
    try {
      result.fits[i] = fit_volume(volumes[i], foreground_mask(volumes[i]), k, opts.preprocessing, cfg);
    } catch (const Error& e) {
      errors[i] = e;
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(volumes.size())));
  if (threads == 1) {
    for (std::size_t i = 0; i < volumes.size(); ++i) work(i);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < volumes.size(); i += threads) work(i);
      });
  }

  std::vector<GmmParams> ok;
  for (std::size_t i = 0; i < volumes.size(); ++i) {
    if (result.fits[i]) {
      ok.push_back(*result.fits[i]);
    } else {
      ++result.skipped;
      if (opts.on_skip) opts.on_skip(i, *errors[i]);
    }
  }
  result.stats = aggregate_fits(ok, k, opts.preprocessing);
  return result;
}

inline PopulationStats estimate_population(const std::vector<Volume>& volumes, int k = 3, const EmConfig& cfg = {},
                                           const PopulationOptions& opts = {}) {
  return estimate_population_detailed(volumes, k, cfg, opts).stats;
}

}  // namespace gmmaug
