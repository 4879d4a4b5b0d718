#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace gmmaug {

/// SplitMix64 (Steele, Lea & Flood 2014; constants as in Vigna's reference
/// splitmix64.c). Every random draw in the toolkit goes through this generator
/// so a seed reproduces the same stream on any platform and in any language.
///
/// Test vector: seed 1234567 yields 6457827717110365317, 3203168211198807973,
/// 9817491932198370423, 4593380528125082431, 16408922859458223821.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  constexpr result_type operator()() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform on the open interval (0, 1): the top 53 bits, offset by half a step.
  constexpr double open_unit() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform on the open interval (-bound, bound); exactly 0 when bound is 0.
  constexpr double symmetric(double bound) noexcept {
    return bound * (2.0 * open_unit() - 1.0);
  }

  /// Uniform index in [0, n) by multiply-shift; n must be > 0.
  constexpr std::uint64_t below(std::uint64_t n) noexcept {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>((*this)()) * n) >> 64);
  }

  /// Standard normal via Box-Muller, consuming two draws per call (the second
  /// variate is discarded so the stream position is a pure function of call count).
  double normal() noexcept {
    const double u1 = open_unit();
    const double u2 = open_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t state_;
};

}  // namespace gmmaug
