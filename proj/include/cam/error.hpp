#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cam {

enum class ErrorCode {
  ShapeMismatch,
  NonFinite,
  EmptyInput,
  InvalidArgument,
  NotScalar,
  TapeConsumed,
  NonDeterministic,
  LabelOutOfRange,
  NotNormalized,
  CorruptHeader,
  UnknownVersion,
  Io,
  MissingPrerequisite,
  UnknownSample,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ShapeMismatch: return "shape_mismatch";
    case ErrorCode::NonFinite: return "non_finite";
    case ErrorCode::EmptyInput: return "empty_input";
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::NotScalar: return "not_scalar";
    case ErrorCode::TapeConsumed: return "tape_consumed";
    case ErrorCode::NonDeterministic: return "non_deterministic";
    case ErrorCode::LabelOutOfRange: return "label_out_of_range";
    case ErrorCode::NotNormalized: return "not_normalized";
    case ErrorCode::CorruptHeader: return "corrupt_header";
    case ErrorCode::UnknownVersion: return "unknown_version";
    case ErrorCode::Io: return "io";
    case ErrorCode::MissingPrerequisite: return "missing_prerequisite";
    case ErrorCode::UnknownSample: return "unknown_sample";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace cam
