#include "jdlab/error.hpp"

namespace jdlab {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonSymmetricMatrix: return "NonSymmetricMatrix";
    case ErrorCode::NonPositiveDefinite: return "NonPositiveDefinite";
    case ErrorCode::QuadratureNonConvergent: return "QuadratureNonConvergent";
    case ErrorCode::OutOfChart: return "OutOfChart";
    case ErrorCode::MissingDerivatives: return "MissingDerivatives";
    case ErrorCode::UnsupportedKernel: return "UnsupportedKernel";
    case ErrorCode::RejectionStall: return "RejectionStall";
    case ErrorCode::TimeBudgetExceeded: return "TimeBudgetExceeded";
    case ErrorCode::ExcessiveCensoring: return "ExcessiveCensoring";
    case ErrorCode::UnboundedBoundaryData: return "UnboundedBoundaryData";
    case ErrorCode::NonPositiveValue: return "NonPositiveValue";
    case ErrorCode::ReferenceDegenerate: return "ReferenceDegenerate";
    case ErrorCode::SolverFailure: return "SolverFailure";
    case ErrorCode::DegenerateColumn: return "DegenerateColumn";
    case ErrorCode::ZeroSolution: return "ZeroSolution";
    case ErrorCode::NotSupported: return "NotSupported";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace jdlab
