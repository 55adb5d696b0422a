#pragma once

#include <stdexcept>
#include <string>

namespace depthforge {

// Failure categories. Each maps to a process exit class so tools can
// distinguish configuration mistakes (2), file/format problems (3) and
// data-driven numerical failures (4).
enum class errc {
  // configuration / argument errors -> exit class 2
  invalid_config,
  invalid_range,
  // I/O and format errors -> exit class 3
  malformed_header,
  dimension_mismatch,
  io_failure,
  // numerical / data-driven failures -> exit class 4
  degenerate_range,
  too_few_valid_pixels,
  infeasible_range,
  empty_conditioning,
  solver_divergence,
  empty_ensemble,
  empty_reliable_set,
  singular_fit,
  empty_mask,
  non_positive_depth,
  insufficient_pairs,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::invalid_config: return "InvalidConfig";
    case errc::invalid_range: return "InvalidRange";
    case errc::malformed_header: return "MalformedHeader";
    case errc::dimension_mismatch: return "DimensionMismatch";
    case errc::io_failure: return "IoFailure";
    case errc::degenerate_range: return "DegenerateRange";
    case errc::too_few_valid_pixels: return "TooFewValidPixels";
    case errc::infeasible_range: return "InfeasibleRange";
    case errc::empty_conditioning: return "EmptyConditioning";
    case errc::solver_divergence: return "SolverDivergence";
    case errc::empty_ensemble: return "EmptyEnsemble";
    case errc::empty_reliable_set: return "EmptyReliableSet";
    case errc::singular_fit: return "SingularFit";
    case errc::empty_mask: return "EmptyMask";
    case errc::non_positive_depth: return "NonPositiveDepth";
    case errc::insufficient_pairs: return "InsufficientPairs";
  }
  return "UnknownError";
}

inline int exit_class(errc c) {
  switch (c) {
    case errc::invalid_config:
    case errc::invalid_range:
      return 2;
    case errc::malformed_header:
    case errc::dimension_mismatch:
    case errc::io_failure:
      return 3;
    default:
      return 4;
  }
}

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code) {}

  errc code() const { return code_; }
  int exit_class() const { return depthforge::exit_class(code_); }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool ok, errc code, const std::string& message) {
  if (!ok) fail(code, message);
}

}  // namespace depthforge
