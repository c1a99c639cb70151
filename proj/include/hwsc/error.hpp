#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hwsc {

enum class ErrorCode {
  MissingCell,
  DuplicateCell,
  NonFiniteValue,
  AllZeroWindow,
  WindowOutOfRange,
  InvalidArgument,
  DegenerateGeometry,
  SingularSystem,
  EmptySeries,
  EmptyPool,
  DimensionMismatch,
  NonPositiveDenominator,
  NonFiniteDensity,
  ZeroPreSd,
  NonPositiveTarget,
  Misalignment,
  ParseError,
  IoError,
  IncompleteGrid,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MissingCell: return "MissingCell";
    case ErrorCode::DuplicateCell: return "DuplicateCell";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::AllZeroWindow: return "AllZeroWindow";
    case ErrorCode::WindowOutOfRange: return "WindowOutOfRange";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::EmptySeries: return "EmptySeries";
    case ErrorCode::EmptyPool: return "EmptyPool";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonPositiveDenominator: return "NonPositiveDenominator";
    case ErrorCode::NonFiniteDensity: return "NonFiniteDensity";
    case ErrorCode::ZeroPreSd: return "ZeroPreSd";
    case ErrorCode::NonPositiveTarget: return "NonPositiveTarget";
    case ErrorCode::Misalignment: return "Misalignment";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::IncompleteGrid: return "IncompleteGrid";
  }
  return "Unknown";
}

}  // namespace hwsc
