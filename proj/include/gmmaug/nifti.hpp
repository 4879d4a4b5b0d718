#pragma once

// Single-file NIfTI-1 (.nii) reader/writer for 3-D scalar volumes.
//
// Reads datatypes uint8 (2), int16 (4), float32 (16) and float64 (64) in
// either byte order; applies scl_slope/scl_inter. Always writes float32,
// little-endian, vox_offset 352 with an empty extension block. Orientation
// (qform/sform) is neither read nor written beyond pixdim.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "gmmaug/error.hpp"
#include "gmmaug/volume.hpp"

namespace gmmaug::nifti {

inline constexpr std::int32_t kHeaderSize = 348;
inline constexpr std::int32_t kVoxOffset = 352;

enum Datatype : std::int16_t {
  kUint8 = 2,
  kInt16 = 4,
  kFloat32 = 16,
  kFloat64 = 64,
};

// Byte offsets into the 348-byte header.
namespace offset {
inline constexpr std::size_t sizeof_hdr = 0;
inline constexpr std::size_t dim = 40;
inline constexpr std::size_t datatype = 70;
inline constexpr std::size_t bitpix = 72;
inline constexpr std::size_t pixdim = 76;
inline constexpr std::size_t vox_offset = 108;
inline constexpr std::size_t scl_slope = 112;
inline constexpr std::size_t scl_inter = 116;
inline constexpr std::size_t xyzt_units = 123;
inline constexpr std::size_t magic = 344;
}  // namespace offset

namespace detail {

template <typename T>
T load(const std::uint8_t* p, bool swap) {
  std::array<std::uint8_t, sizeof(T)> bytes;
  std::memcpy(bytes.data(), p, sizeof(T));
  if (swap) std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

// Stores little-endian regardless of host order.
template <typename T>
void store_le(std::uint8_t* p, T value) {
  auto bytes = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  std::memcpy(p, bytes.data(), sizeof(T));
}

inline constexpr bool host_is_little = std::endian::native == std::endian::little;

inline std::size_t bytes_per_voxel(std::int16_t datatype) {
  switch (datatype) {
    case kUint8: return 1;
    case kInt16: return 2;
    case kFloat32: return 4;
    case kFloat64: return 8;
    default:
      throw Error(ErrorKind::UnsupportedDatatype, "NIfTI datatype " + std::to_string(datatype) + " is not supported");
  }
}

}  // namespace detail

/// Parses an in-memory .nii image.
inline Volume parse(const std::vector<std::uint8_t>& buf) {
  using detail::load;
  if (buf.size() < static_cast<std::size_t>(kHeaderSize)) throw Error(ErrorKind::CorruptFile, "file shorter than a NIfTI-1 header");
  const std::uint8_t* h = buf.data();

  // sizeof_hdr must read 348 in one of the two byte orders.
  const bool file_little = load<std::int32_t>(h, !detail::host_is_little) == kHeaderSize;
  const bool file_big = load<std::int32_t>(h, detail::host_is_little) == kHeaderSize;
  if (!file_little && !file_big) throw Error(ErrorKind::NotNifti, "sizeof_hdr is not 348");
  const bool swap = file_little != detail::host_is_little;

  if (std::memcmp(h + offset::magic, "n+1\0", 4) != 0) throw Error(ErrorKind::NotNifti, "magic is not \"n+1\"");

  std::array<std::int16_t, 8> dim{};
  for (std::size_t i = 0; i < 8; ++i) dim[i] = load<std::int16_t>(h + offset::dim + 2 * i, swap);
  if (dim[0] < 1 || dim[0] > 7) throw Error(ErrorKind::CorruptFile, "dim[0] out of range");
  for (int i = 4; i <= dim[0]; ++i)
    if (dim[i] > 1) throw Error(ErrorKind::UnsupportedDimensions, "only 3-D volumes are supported");

  Dims dims{1, 1, 1};
  Spacing spacing{1.0, 1.0, 1.0};
  for (int i = 0; i < std::min<int>(dim[0], 3); ++i) {
    if (dim[i + 1] < 1) throw Error(ErrorKind::CorruptFile, "non-positive dimension");
    dims[i] = static_cast<std::size_t>(dim[i + 1]);
    const auto p = load<float>(h + offset::pixdim + 4 * (i + 1), swap);
    // Unset pixdim entries are common; treat them as 1 mm.
    if (std::isfinite(p) && p > 0.0f) spacing[i] = p;
  }

  const auto datatype = load<std::int16_t>(h + offset::datatype, swap);
  const std::size_t width = detail::bytes_per_voxel(datatype);

  const auto vox_offset_f = load<float>(h + offset::vox_offset, swap);
  if (!std::isfinite(vox_offset_f) || vox_offset_f < static_cast<float>(kHeaderSize))
    throw Error(ErrorKind::CorruptFile, "invalid vox_offset");
  const auto data_start = static_cast<std::size_t>(vox_offset_f);
  const std::size_t n = voxel_count(dims);
  if (buf.size() < data_start || buf.size() - data_start < n * width)
    throw Error(ErrorKind::CorruptFile, "voxel data truncated");

  double slope = load<float>(h + offset::scl_slope, swap);
  double inter = load<float>(h + offset::scl_inter, swap);
  if (!std::isfinite(slope) || slope == 0.0) {
    slope = 1.0;
    inter = 0.0;
  }
  if (!std::isfinite(inter)) inter = 0.0;

  std::vector<double> data(n);
  const std::uint8_t* body = buf.data() + data_start;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* p = body + i * width;
    double raw = 0.0;
    switch (datatype) {
      case kUint8: raw = *p; break;
      case kInt16: raw = load<std::int16_t>(p, swap); break;
      case kFloat32: raw = load<float>(p, swap); break;
      case kFloat64: raw = load<double>(p, swap); break;
    }
    const double v = raw * slope + inter;
    if (!std::isfinite(v)) throw Error(ErrorKind::CorruptFile, "non-finite voxel value at index " + std::to_string(i));
    data[i] = v;
  }
  return {dims, spacing, std::move(data)};
}

/// Serializes to the fixed float32 little-endian layout.
inline std::vector<std::uint8_t> serialize(const Volume& vol) {
  using detail::store_le;
  std::vector<std::uint8_t> buf(kVoxOffset + 4 * vol.size(), 0);
  std::uint8_t* h = buf.data();

  store_le<std::int32_t>(h + offset::sizeof_hdr, kHeaderSize);
  const std::array<std::int16_t, 8> dim{3,
                                        static_cast<std::int16_t>(vol.dims()[0]),
                                        static_cast<std::int16_t>(vol.dims()[1]),
                                        static_cast<std::int16_t>(vol.dims()[2]),
                                        1, 1, 1, 1};
  for (std::size_t i = 0; i < 8; ++i) store_le<std::int16_t>(h + offset::dim + 2 * i, dim[i]);
  store_le<std::int16_t>(h + offset::datatype, kFloat32);
  store_le<std::int16_t>(h + offset::bitpix, 32);
  const std::array<float, 8> pixdim{1.0f,
                                    static_cast<float>(vol.spacing()[0]),
                                    static_cast<float>(vol.spacing()[1]),
                                    static_cast<float>(vol.spacing()[2]),
                                    1.0f, 1.0f, 1.0f, 1.0f};
  for (std::size_t i = 0; i < 8; ++i) store_le<float>(h + offset::pixdim + 4 * i, pixdim[i]);
  store_le<float>(h + offset::vox_offset, static_cast<float>(kVoxOffset));
  store_le<float>(h + offset::scl_slope, 1.0f);
  store_le<float>(h + offset::scl_inter, 0.0f);
  h[offset::xyzt_units] = 2;  // NIFTI_UNITS_MM
  std::memcpy(h + offset::magic, "n+1\0", 4);
  // Bytes 348..351 stay zero: "no extensions".

  std::uint8_t* body = buf.data() + kVoxOffset;
  for (std::size_t i = 0; i < vol.size(); ++i) store_le<float>(body + 4 * i, static_cast<float>(vol[i]));
  return buf;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorKind::IoError, "read failed for " + path.string());
  return buf;
}

inline void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& buf) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

}  // namespace gmmaug::nifti

namespace gmmaug {

inline Volume read_volume(const std::filesystem::path& path) {
  try {
    return nifti::parse(nifti::read_file_bytes(path));
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + std::string(e.what()).substr(to_string(e.kind()).size() + 2));
  }
}

inline void write_volume(const Volume& vol, const std::filesystem::path& path) {
  for (std::size_t d : vol.dims())
    if (d > 32767) throw Error(ErrorKind::UnsupportedDimensions, "dimension exceeds NIfTI-1 int16 range");
  nifti::write_file_bytes(path, nifti::serialize(vol));
}

inline LabelVolume read_labels(const std::filesystem::path& path) { return LabelVolume::from_volume(read_volume(path)); }

inline void write_labels(const LabelVolume& labels, const std::filesystem::path& path) {
  write_volume(labels.to_volume(), path);
}

}  // namespace gmmaug
