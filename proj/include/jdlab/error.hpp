#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace jdlab {

enum class ErrorCode {
  InvalidArgument,
  NonSymmetricMatrix,
  NonPositiveDefinite,
  QuadratureNonConvergent,
  OutOfChart,
  MissingDerivatives,
  UnsupportedKernel,
  RejectionStall,
  TimeBudgetExceeded,
  ExcessiveCensoring,
  UnboundedBoundaryData,
  NonPositiveValue,
  ReferenceDegenerate,
  SolverFailure,
  DegenerateColumn,
  ZeroSolution,
  NotSupported,
  ConfigError,
  IoError,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library; the code identifies the failure
/// class named in the operation contracts.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}

  ErrorCode code() const noexcept { return code_; }
  // Message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace jdlab
