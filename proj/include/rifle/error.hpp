#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rifle {

enum class Errc {
  InvalidArgument,
  DimMismatch,
  IndexOutOfRange,
  ParseError,
  TooLarge,
  TooSmall,
  TooFewSamples,
  Indivisible,
  DegenerateClass,
  EmptySlice,
  ZeroVector,
  ZeroMatrix,
  NotPositiveDefinite,
  NoConvergence,
  DegenerateDenominator,
  ZeroUpdate,
  NonFiniteIterate,
  AllSupportsSingular,
  ZeroGap,
};

inline std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::DimMismatch: return "DimMismatch";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::ParseError: return "ParseError";
    case Errc::TooLarge: return "TooLarge";
    case Errc::TooSmall: return "TooSmall";
    case Errc::TooFewSamples: return "TooFewSamples";
    case Errc::Indivisible: return "Indivisible";
    case Errc::DegenerateClass: return "DegenerateClass";
    case Errc::EmptySlice: return "EmptySlice";
    case Errc::ZeroVector: return "ZeroVector";
    case Errc::ZeroMatrix: return "ZeroMatrix";
    case Errc::NotPositiveDefinite: return "NotPositiveDefinite";
    case Errc::NoConvergence: return "NoConvergence";
    case Errc::DegenerateDenominator: return "DegenerateDenominator";
    case Errc::ZeroUpdate: return "ZeroUpdate";
    case Errc::NonFiniteIterate: return "NonFiniteIterate";
    case Errc::AllSupportsSingular: return "AllSupportsSingular";
    case Errc::ZeroGap: return "ZeroGap";
  }
  return "Unknown";
}

// Numerical failures (as opposed to bad input) map to CLI exit code 3.
inline bool is_numerical(Errc code) {
  switch (code) {
    case Errc::NotPositiveDefinite:
    case Errc::NoConvergence:
    case Errc::DegenerateDenominator:
    case Errc::ZeroUpdate:
    case Errc::NonFiniteIterate:
    case Errc::AllSupportsSingular:
    case Errc::ZeroGap:
    case Errc::ZeroMatrix:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace rifle
