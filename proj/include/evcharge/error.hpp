#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace evcharge {

enum class ErrorKind {
  kFrameMismatch,
  kInvalidArgument,
  kDegenerateGeometry,
  kDegenerateConfiguration,
  kEmptyResult,
  kConvergenceFailure,
  kAmbiguousCluster,
  kVisibility,
  kEstimationFailure,
  kForceLimit,
  kTimeout,
  kWorkspace,
  kSafetyLimit,
  kDivergence,
  kIo,
  kConfig,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kFrameMismatch: return "frame_mismatch";
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kDegenerateGeometry: return "degenerate_geometry";
    case ErrorKind::kDegenerateConfiguration: return "degenerate_configuration";
    case ErrorKind::kEmptyResult: return "empty_result";
    case ErrorKind::kConvergenceFailure: return "convergence_failure";
    case ErrorKind::kAmbiguousCluster: return "ambiguous_cluster";
    case ErrorKind::kVisibility: return "visibility";
    case ErrorKind::kEstimationFailure: return "estimation_failure";
    case ErrorKind::kForceLimit: return "force_limit";
    case ErrorKind::kTimeout: return "timeout";
    case ErrorKind::kWorkspace: return "workspace";
    case ErrorKind::kSafetyLimit: return "safety_limit";
    case ErrorKind::kDivergence: return "divergence";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kConfig: return "config";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace evcharge
