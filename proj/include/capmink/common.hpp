#pragma once

#include <stdexcept>
#include <string>

namespace capmink {

/// Failure categories surfaced by the library. Every capmink exception
/// carries one of these so callers (and the CLI) can map errors to exit
/// codes without string matching.
enum class ErrorCode {
  UnsupportedDimension,
  UnboundedBody,
  EmptyInterior,
  DegenerateBody,
  InvalidExponent,
  DomainTooSmall,
  UnresolvedFacet,
  ZeroSupportValue,
  ZeroFunctional,
  CriticalExponent,
  SpreadViolation,
  CentroidViolation,
  NoConvergence,
  InvalidArgument,
  IoError,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace capmink
