#pragma once

#include <stdexcept>
#include <string>

namespace tetra {

enum class ErrorCode {
  ZeroVector,
  DimensionMismatch,
  ParseError,
  InvariantViolation,
  Io,
  Format,
  BatchTooSmall,
  EmptyBatch,
  MissingSecondSubject,
  NoValidQuadruplets,
  UnknownSampleId,
  NonFiniteGradient,
  EmptyScoreList,
  EmptyProtocolCell,
  OutOfRangeInput,
  EmptyClass,
  NonFiniteLoss,
  ConfigInvalid,
  ProtocolInfeasible,
};

// CLI exit-code buckets: 1 usage/config, 2 data/invariant, 3 numeric.
enum class ErrorClass { Config = 1, Data = 2, Numeric = 3 };

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::Io: return "IoError";
    case ErrorCode::Format: return "FormatError";
    case ErrorCode::BatchTooSmall: return "BatchTooSmall";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::MissingSecondSubject: return "MissingSecondSubject";
    case ErrorCode::NoValidQuadruplets: return "NoValidQuadruplets";
    case ErrorCode::UnknownSampleId: return "UnknownSampleId";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::EmptyScoreList: return "EmptyScoreList";
    case ErrorCode::EmptyProtocolCell: return "EmptyProtocolCell";
    case ErrorCode::OutOfRangeInput: return "OutOfRangeInput";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::ProtocolInfeasible: return "ProtocolInfeasible";
  }
  return "UnknownError";
}

inline ErrorClass classify(ErrorCode c) {
  switch (c) {
    case ErrorCode::ConfigInvalid:
      return ErrorClass::Config;
    case ErrorCode::ZeroVector:
    case ErrorCode::NonFiniteGradient:
    case ErrorCode::NonFiniteLoss:
      return ErrorClass::Numeric;
    default:
      return ErrorClass::Data;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorClass error_class() const noexcept { return classify(code_); }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, ErrorCode code, const std::string& msg) {
  if (!cond) fail(code, msg);
}

}  // namespace tetra
