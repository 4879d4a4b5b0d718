#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmmaug/error.hpp"
#include "gmmaug/rng.hpp"
#include "gmmaug/volume.hpp"

namespace gmmaug {

/// One tissue class occupying the spherical shell inner_radius <= r < outer_radius
/// (voxel units) around the grid centre.
struct TissueSpec {
  double mean = 0.0;
  double variance = 0.0;
  double inner_radius = 0.0;
  double outer_radius = 0.0;
};

/// Synthetic skull-stripped "brain": nested shells, one per tissue, on a zero
/// background. Tissues are listed in ascending mean order and get labels 1..n.
struct PhantomSpec {
  Dims dims{64, 64, 64};
  Spacing spacing{1.0, 1.0, 1.0};
  std::vector<TissueSpec> tissues{
      {0.1, 0.002, 24.86, 28.0},  // CSF, outer shell
      {0.2, 0.001, 18.75, 24.86},  // GM
      {0.3, 0.001, 0.0, 18.75},    // WM, core
  };
  std::uint64_t seed = 0;
};

/// Smallest foreground intensity; noise draws are clipped to [kPhantomMinValue, 1].
inline constexpr double kPhantomMinValue = 1e-6;

namespace detail {

inline double squared_radius(const Dims& dims, std::size_t x, std::size_t y, std::size_t z) noexcept {
  const double dx = static_cast<double>(x) - 0.5 * static_cast<double>(dims[0] - 1);
  const double dy = static_cast<double>(y) - 0.5 * static_cast<double>(dims[1] - 1);
  const double dz = static_cast<double>(z) - 0.5 * static_cast<double>(dims[2] - 1);
  return dx * dx + dy * dy + dz * dz;
}

/// Tissue index containing squared radius r2, or -1 for background.
inline int tissue_at(const std::vector<TissueSpec>& tissues, double r2) noexcept {
  for (std::size_t t = 0; t < tissues.size(); ++t)
    if (r2 >= tissues[t].inner_radius * tissues[t].inner_radius && r2 < tissues[t].outer_radius * tissues[t].outer_radius)
      return static_cast<int>(t);
  return -1;
}

}  // namespace detail

inline LabelVolume phantom_labels(const PhantomSpec& spec) {
  LabelVolume labels(spec.dims, spec.spacing);
  std::size_t i = 0;
  for (std::size_t z = 0; z < spec.dims[2]; ++z)
    for (std::size_t y = 0; y < spec.dims[1]; ++y)
      for (std::size_t x = 0; x < spec.dims[0]; ++x, ++i)
        labels[i] = static_cast<LabelVolume::Label>(detail::tissue_at(spec.tissues, detail::squared_radius(spec.dims, x, y, z)) + 1);
  return labels;
}

inline void validate(const PhantomSpec& spec) {
  for (std::size_t d : spec.dims)
    if (d == 0) throw Error(ErrorKind::InvalidSpec, "phantom dims must be positive");
  for (double s : spec.spacing)
    if (!(s > 0.0)) throw Error(ErrorKind::InvalidSpec, "phantom spacing must be positive");
  if (spec.tissues.empty()) throw Error(ErrorKind::InvalidSpec, "phantom needs at least one tissue");
  for (std::size_t t = 0; t < spec.tissues.size(); ++t) {
    const auto& ts = spec.tissues[t];
    if (!(ts.mean > 0.0 && ts.mean <= 1.0)) throw Error(ErrorKind::InvalidSpec, "tissue mean outside (0,1]");
    if (!(ts.variance >= 0.0) || !std::isfinite(ts.variance)) throw Error(ErrorKind::InvalidSpec, "negative tissue variance");
    if (!(ts.inner_radius >= 0.0 && ts.inner_radius < ts.outer_radius) || !std::isfinite(ts.outer_radius))
      throw Error(ErrorKind::InvalidSpec, "tissue shell radii must satisfy 0 <= inner < outer");
    if (t > 0 && !(spec.tissues[t - 1].mean < ts.mean))
      throw Error(ErrorKind::InvalidSpec, "tissue means must be strictly ascending");
    for (std::size_t u = 0; u < t; ++u) {
      const auto& o = spec.tissues[u];
      if (ts.inner_radius < o.outer_radius && o.inner_radius < ts.outer_radius)
        throw Error(ErrorKind::InvalidSpec, "tissue shells overlap");
    }
  }
  const auto labels = phantom_labels(spec);
  std::vector<std::size_t> counts(spec.tissues.size() + 1, 0);
  for (auto l : labels.labels()) ++counts[l];
  for (std::size_t t = 1; t < counts.size(); ++t)
    if (counts[t] == 0) throw Error(ErrorKind::InvalidSpec, "tissue " + std::to_string(t) + " covers no voxels");
}

/// Intensity volume plus ground-truth labels. Voxels are visited in storage
/// order and each foreground voxel consumes one normal draw.
inline std::pair<Volume, LabelVolume> generate_phantom(const PhantomSpec& spec) {
  validate(spec);
  LabelVolume labels = phantom_labels(spec);
  Volume vol(spec.dims, spec.spacing);
  SplitMix64 rng(spec.seed);
  for (std::size_t i = 0; i < vol.size(); ++i) {
    if (labels[i] == 0) continue;
    const auto& ts = spec.tissues[labels[i] - 1u];
    const double noise = rng.normal();
    vol[i] = std::clamp(ts.mean + std::sqrt(ts.variance) * noise, kPhantomMinValue, 1.0);
  }
  return {std::move(vol), std::move(labels)};
}

inline void to_json(nlohmann::json& j, const PhantomSpec& s) {
  nlohmann::json tissues = nlohmann::json::array();
  for (const auto& t : s.tissues)
    tissues.push_back({{"mean", t.mean}, {"variance", t.variance}, {"inner_radius", t.inner_radius},
                       {"outer_radius", t.outer_radius}});
  j = nlohmann::json{{"dims", s.dims}, {"spacing", s.spacing}, {"tissues", tissues}, {"seed", s.seed}};
}

/// Missing keys keep their defaults, so a file may override only what it needs.
inline void from_json(const nlohmann::json& j, PhantomSpec& s) {
  try {
    if (j.contains("dims")) j.at("dims").get_to(s.dims);
    if (j.contains("spacing")) j.at("spacing").get_to(s.spacing);
    if (j.contains("seed")) j.at("seed").get_to(s.seed);
    if (j.contains("tissues")) {
      s.tissues.clear();
      for (const auto& t : j.at("tissues"))
        s.tissues.push_back({t.at("mean").get<double>(), t.at("variance").get<double>(),
                             t.at("inner_radius").get<double>(), t.at("outer_radius").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidSpec, e.what());
  }
}

}  // namespace gmmaug
