#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gmmaug {

enum class ErrorKind {
  IoError,
  NotNifti,
  CorruptFile,
  UnsupportedDatatype,
  UnsupportedDimensions,
  ShapeMismatch,
  EmptyMask,
  DegenerateIntensity,
  InsufficientData,
  DegenerateComponent,
  InvalidStats,
  InvalidSpec,
  InvalidArgument,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::NotNifti: return "NotNifti";
    case ErrorKind::CorruptFile: return "CorruptFile";
    case ErrorKind::UnsupportedDatatype: return "UnsupportedDatatype";
    case ErrorKind::UnsupportedDimensions: return "UnsupportedDimensions";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::EmptyMask: return "EmptyMask";
    case ErrorKind::DegenerateIntensity: return "DegenerateIntensity";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::DegenerateComponent: return "DegenerateComponent";
    case ErrorKind::InvalidStats: return "InvalidStats";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Numerical failures, as opposed to bad input or I/O problems.
constexpr bool is_numerical(ErrorKind kind) noexcept {
  return kind == ErrorKind::DegenerateIntensity || kind == ErrorKind::DegenerateComponent;
}

/// Every failure in the library is reported as an Error carrying its kind.
/// what() is prefixed with the kind name so CLI users can grep for it.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace gmmaug
