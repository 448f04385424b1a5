#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mpcctraj {

enum class ErrorCode {
  DimensionMismatch,
  BadComplementarity,
  BadGrid,
  MissingParamData,
  NonFiniteValue,
  UnsupportedOrder,
  IncompatibleScheme,
  LengthMismatch,
  UnsupportedPrimitive,
  StaticPair,
  BadVertexMatrix,
  BranchOutOfRange,
  EmptyMode,
  NonpositiveDuration,
  UnknownExample,
  BadConfig,
  InvalidArgument,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::BadComplementarity: return "BadComplementarity";
    case ErrorCode::BadGrid: return "BadGrid";
    case ErrorCode::MissingParamData: return "MissingParamData";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::UnsupportedOrder: return "UnsupportedOrder";
    case ErrorCode::IncompatibleScheme: return "IncompatibleScheme";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::UnsupportedPrimitive: return "UnsupportedPrimitive";
    case ErrorCode::StaticPair: return "StaticPair";
    case ErrorCode::BadVertexMatrix: return "BadVertexMatrix";
    case ErrorCode::BranchOutOfRange: return "BranchOutOfRange";
    case ErrorCode::EmptyMode: return "EmptyMode";
    case ErrorCode::NonpositiveDuration: return "NonpositiveDuration";
    case ErrorCode::UnknownExample: return "UnknownExample";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Exception carrying a machine-checkable code alongside the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace mpcctraj
