#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace rotinv {

enum class ErrorKind {
  NonSymmetric,
  NoConvergence,
  NotPSD,
  NotPositiveDefinite,
  WindowTooSmall,
  PathTooShort,
  GridMismatch,
  MissingDriver,
  EmptyMatrixList,
  LengthMismatch,
  TooFewSamples,
  HorizonTooShort,
  InvalidArgument,
  ConfigInvalid,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonSymmetric: return "NonSymmetric";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::NotPSD: return "NotPSD";
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::WindowTooSmall: return "WindowTooSmall";
    case ErrorKind::PathTooShort: return "PathTooShort";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::MissingDriver: return "MissingDriver";
    case ErrorKind::EmptyMatrixList: return "EmptyMatrixList";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::HorizonTooShort: return "HorizonTooShort";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
  }
  return "Unknown";
}

/// Single exception type for the library; callers branch on kind().
/// Some kinds carry a numeric payload: the smallest eigenvalue for
/// NotPSD/NotPositiveDefinite, and the first failing grid index for
/// reconstruction failures.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  Error(ErrorKind kind, const std::string& what, double value)
      : Error(kind, what) {
    value_ = value;
  }

  ErrorKind kind() const noexcept { return kind_; }
  std::optional<double> value() const noexcept { return value_; }
  std::optional<std::size_t> index() const noexcept { return index_; }

  Error& with_index(std::size_t index) {
    index_ = index;
    return *this;
  }

 private:
  ErrorKind kind_;
  std::optional<double> value_;
  std::optional<std::size_t> index_;
};

}  // namespace rotinv
