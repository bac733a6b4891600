#pragma once

#include <stdexcept>
#include <string>

namespace darkmix {

/// Machine-checkable failure categories. The message carries the details
/// (indices, field paths, condition estimates); the code is what callers
/// and tests switch on.
enum class ErrorCode {
  invalid_argument,
  duplicate_condition,
  nonpositive_duration,
  dimension_mismatch,
  singular_covariance,
  materialize_cap_exceeded,
  non_finite_input,
  degenerate_posterior,
  component_death,
  singular_information,
  nec_undefined,
  mismatched_fits,
  bootstrap_failures,
  empty_selection,
  insufficient_data,
  unknown_schema,
  truncated_data,
  version_mismatch,
  parse_error,
  io_failure,
  unsupported_preset,
  monotonicity_violation,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace darkmix
