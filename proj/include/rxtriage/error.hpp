#ifndef RXTRIAGE_ERROR_HPP
#define RXTRIAGE_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace rxtriage {

enum class ErrorCode {
  TooFewPixels,
  SingularCovariance,
  NonFiniteInput,
  DimensionMismatch,
  CorrectionModeMismatch,
  ParseError,
  MissingFile,
  DecodeError,
  EncodeError,
  MissingPercentiles,
  EmptyMap,
  MixedModels,
  IdSetMismatch,
  TooShort,
  IoError,
  InvalidArgument,
  NotFound,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::TooFewPixels: return "TooFewPixels";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::CorrectionModeMismatch: return "CorrectionModeMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::DecodeError: return "DecodeError";
    case ErrorCode::EncodeError: return "EncodeError";
    case ErrorCode::MissingPercentiles: return "MissingPercentiles";
    case ErrorCode::EmptyMap: return "EmptyMap";
    case ErrorCode::MixedModels: return "MixedModels";
    case ErrorCode::IdSetMismatch: return "IdSetMismatch";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NotFound: return "NotFound";
  }
  return "Unknown";
}

/// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Re-throws `e` with a context prefix (e.g. the sequence id that failed).
[[noreturn]] inline void rethrow_with_context(const Error& e, const std::string& context) {
  std::string what = e.what();
  auto prefix = std::string(to_string(e.code())) + ": ";
  if (what.rfind(prefix, 0) == 0) what.erase(0, prefix.size());
  throw Error(e.code(), context + ": " + what);
}

}  // namespace rxtriage

#endif  // RXTRIAGE_ERROR_HPP
