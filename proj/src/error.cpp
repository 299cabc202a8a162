#include "gazescreen/error.hpp"

namespace gazescreen {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::NonUnitDirection: return "NonUnitDirection";
    case ErrorCode::BadLabel: return "BadLabel";
    case ErrorCode::NonMonotonicTime: return "NonMonotonicTime";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::SingleClassStratify: return "SingleClassStratify";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::InsufficientClassSamples: return "InsufficientClassSamples";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NonBinaryLabel: return "NonBinaryLabel";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::EmptyNode: return "EmptyNode";
    case ErrorCode::OutOfRangeTime: return "OutOfRangeTime";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::InvalidHyperParam: return "InvalidHyperParam";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::KernelNotPD: return "KernelNotPD";
    case ErrorCode::NonConvergence: return "NonConvergence";
  }
  return "Unknown";
}

ErrorCategory category(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidSpec:
    case ErrorCode::InvalidHyperParam:
    case ErrorCode::InvalidConfig:
      return ErrorCategory::Config;
    case ErrorCode::KernelNotPD:
    case ErrorCode::NonConvergence:
      return ErrorCategory::Numeric;
    default:
      return ErrorCategory::Data;
  }
}

Error::Error(ErrorCode code, const std::string& what) : Error(code, what, {}) {}

Error::Error(ErrorCode code, std::string detail, std::string stage)
    : std::runtime_error((stage.empty() ? std::string() : "[" + stage + "] ") +
                         std::string(to_string(code)) + ": " + detail),
      code_(code),
      detail_(std::move(detail)),
      stage_(std::move(stage)) {}

Error Error::with_stage(std::string stage) const { return Error(code_, detail_, std::move(stage)); }

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace gazescreen
