#pragma once

#include <stdexcept>
#include <string>

namespace dualview {

enum class ErrorCode {
  InvalidArgument,
  TooSmall,
  NotMultiple,
  ShapeMismatch,
  WrongPerspective,
  OutOfRange,
  NonFinite,
  NotDivisible,
  UnknownVariant,
  UnsupportedFormat,
  CorruptFile,
  Io,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::TooSmall: return "TooSmall";
    case ErrorCode::NotMultiple: return "NotMultiple";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::WrongPerspective: return "WrongPerspective";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::NotDivisible: return "NotDivisible";
    case ErrorCode::UnknownVariant: return "UnknownVariant";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

// Every failure in the library surfaces as this exception; code() is stable,
// what() is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dualview
