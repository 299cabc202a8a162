#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gazescreen {

enum class ErrorCode {
  // data
  MissingColumn,
  MalformedRow,
  NonUnitDirection,
  BadLabel,
  NonMonotonicTime,
  EmptyDataset,
  SingleClassStratify,
  SingleClass,
  InsufficientClassSamples,
  DimensionMismatch,
  LengthMismatch,
  NonBinaryLabel,
  NonFiniteValue,
  EmptyNode,
  OutOfRangeTime,
  IoError,
  // configuration / contract
  InvalidSpec,
  InvalidHyperParam,
  InvalidConfig,
  // numerics
  KernelNotPD,
  NonConvergence,
};

enum class ErrorCategory { Config, Data, Numeric };

std::string_view to_string(ErrorCode code);
ErrorCategory category(ErrorCode code);

/// Every failure raised by the library. The message carries the offending
/// input; `stage()` is filled in by the pipeline when the error crosses a
/// stage boundary.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return gazescreen::category(code_); }
  const std::string& detail() const noexcept { return detail_; }
  const std::string& stage() const noexcept { return stage_; }

  /// Returns a copy tagged with a pipeline stage; what() becomes
  /// "[stage] Code: detail".
  Error with_stage(std::string stage) const;

 private:
  Error(ErrorCode code, std::string detail, std::string stage);

  ErrorCode code_;
  std::string detail_;
  std::string stage_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

}  // namespace gazescreen
