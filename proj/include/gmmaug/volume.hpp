#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gmmaug/error.hpp"

namespace gmmaug {

using Dims = std::array<std::size_t, 3>;
using Spacing = std::array<double, 3>;

/// Foreground flags, one byte per voxel (x-fastest like the volume data).
using Mask = std::vector<std::uint8_t>;

inline std::size_t voxel_count(const Dims& dims) noexcept { return dims[0] * dims[1] * dims[2]; }

namespace detail {

inline void check_geometry(const Dims& dims, const Spacing& spacing, std::size_t length) {
  for (std::size_t d : dims)
    if (d == 0) throw Error(ErrorKind::InvalidArgument, "volume dimensions must be positive");
  for (double s : spacing)
    if (!(s > 0.0) || !std::isfinite(s)) throw Error(ErrorKind::InvalidArgument, "voxel spacing must be positive");
  if (length != voxel_count(dims))
    throw Error(ErrorKind::ShapeMismatch, "data length " + std::to_string(length) + " does not match dims");
}

}  // namespace detail

/// A 3-D scalar grid, x-fastest, with voxel spacing in mm.
class Volume {
 public:
  Volume(Dims dims, Spacing spacing, std::vector<double> data)
      : dims_(dims), spacing_(spacing), data_(std::move(data)) {
    detail::check_geometry(dims_, spacing_, data_.size());
    for (double v : data_)
      if (!std::isfinite(v)) throw Error(ErrorKind::InvalidArgument, "volume contains non-finite values");
  }

  /// Zero-filled volume.
  Volume(Dims dims, Spacing spacing = {1.0, 1.0, 1.0})
      : Volume(dims, spacing, std::vector<double>(voxel_count(dims), 0.0)) {}

  const Dims& dims() const noexcept { return dims_; }
  const Spacing& spacing() const noexcept { return spacing_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  double operator[](std::size_t i) const noexcept { return data_[i]; }
  double& operator[](std::size_t i) noexcept { return data_[i]; }

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return x + dims_[0] * (y + dims_[1] * z);
  }
  double at(std::size_t x, std::size_t y, std::size_t z) const { return data_.at(index(x, y, z)); }

  bool same_grid(const Volume& other) const noexcept { return dims_ == other.dims_; }

 private:
  Dims dims_;
  Spacing spacing_;
  std::vector<double> data_;
};

/// Integer-labelled segmentation on the same kind of grid.
class LabelVolume {
 public:
  using Label = std::uint16_t;

  LabelVolume(Dims dims, Spacing spacing, std::vector<Label> labels)
      : dims_(dims), spacing_(spacing), labels_(std::move(labels)) {
    detail::check_geometry(dims_, spacing_, labels_.size());
  }

  LabelVolume(Dims dims, Spacing spacing = {1.0, 1.0, 1.0})
      : LabelVolume(dims, spacing, std::vector<Label>(voxel_count(dims), 0)) {}

  /// Converts an intensity volume holding non-negative integral values.
  static LabelVolume from_volume(const Volume& vol) {
    std::vector<Label> labels(vol.size());
    for (std::size_t i = 0; i < vol.size(); ++i) {
      const double v = vol[i];
      if (v < 0.0 || v > 65535.0 || v != std::round(v))
        throw Error(ErrorKind::InvalidArgument, "label volume holds a non-integral or negative value");
      labels[i] = static_cast<Label>(v);
    }
    return {vol.dims(), vol.spacing(), std::move(labels)};
  }

  Volume to_volume() const {
    return {dims_, spacing_, std::vector<double>(labels_.begin(), labels_.end())};
  }

  const Dims& dims() const noexcept { return dims_; }
  const Spacing& spacing() const noexcept { return spacing_; }
  std::size_t size() const noexcept { return labels_.size(); }

  std::span<const Label> labels() const noexcept { return labels_; }
  std::span<Label> labels() noexcept { return labels_; }

  Label operator[](std::size_t i) const noexcept { return labels_[i]; }
  Label& operator[](std::size_t i) noexcept { return labels_[i]; }

 private:
  Dims dims_;
  Spacing spacing_;
  std::vector<Label> labels_;
};

/// Foreground of a skull-stripped volume: label > 0 when an explicit mask is
/// given, otherwise intensity > 0.
inline Mask foreground_mask(const Volume& vol, const std::optional<LabelVolume>& explicit_mask = std::nullopt) {
  Mask mask(vol.size(), 0);
  std::size_t count = 0;
  if (explicit_mask) {
    if (explicit_mask->dims() != vol.dims()) throw Error(ErrorKind::ShapeMismatch, "mask dims differ from volume dims");
    for (std::size_t i = 0; i < vol.size(); ++i) count += (mask[i] = (*explicit_mask)[i] > 0);
  } else {
    for (std::size_t i = 0; i < vol.size(); ++i) count += (mask[i] = vol[i] > 0.0);
  }
  if (count == 0) throw Error(ErrorKind::EmptyMask, "foreground mask has no voxels");
  return mask;
}

inline std::size_t mask_count(const Mask& mask) noexcept {
  std::size_t n = 0;
  for (auto m : mask) n += m != 0;
  return n;
}

/// Masked voxel values in voxel order.
inline std::vector<double> masked_values(const Volume& vol, const Mask& mask) {
  if (mask.size() != vol.size()) throw Error(ErrorKind::ShapeMismatch, "mask length differs from volume size");
  std::vector<double> out;
  out.reserve(mask_count(mask));
  for (std::size_t i = 0; i < vol.size(); ++i)
    if (mask[i]) out.push_back(vol[i]);
  return out;
}

}  // namespace gmmaug
