#include "capmink/common.hpp"

namespace capmink {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnsupportedDimension: return "UnsupportedDimension";
    case ErrorCode::UnboundedBody: return "UnboundedBody";
    case ErrorCode::EmptyInterior: return "EmptyInterior";
    case ErrorCode::DegenerateBody: return "DegenerateBody";
    case ErrorCode::InvalidExponent: return "InvalidExponent";
    case ErrorCode::DomainTooSmall: return "DomainTooSmall";
    case ErrorCode::UnresolvedFacet: return "UnresolvedFacet";
    case ErrorCode::ZeroSupportValue: return "ZeroSupportValue";
    case ErrorCode::ZeroFunctional: return "ZeroFunctional";
    case ErrorCode::CriticalExponent: return "CriticalExponent";
    case ErrorCode::SpreadViolation: return "SpreadViolation";
    case ErrorCode::CentroidViolation: return "CentroidViolation";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "UnknownError";
}

}  // namespace capmink
