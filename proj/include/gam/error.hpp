#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gam {

// Every failure the library reports carries one of these kinds.
enum class ErrorKind {
  domain,              // argument outside an operation's domain
  validation,          // converter spec / description rejected
  description,         // circuit term references an undeclared name
  symmetry_violation,  // real-signal vector lost conjugate symmetry
  no_edge,             // duty 0 or 1 has no switching instants
  grazing_crossing,    // zero crossing with (near) zero slope
  not_a_zero,          // requested instant is not a zero of the signal
  pole,                // evaluation at s = 0 of a 1/s translation
  lossless_degeneracy, // equilibrium matrix singular / ill conditioned
  iteration_failure,   // scalar operating-point iteration did not converge
  mode,                // declared conduction mode inconsistent with solution
  singularity,         // closed-loop system singular at a frequency
  excluded_frequency,  // s = jk*omega, k != 0
  runaway,             // simulation exceeded the event budget
  stiffness,           // simulation step underflow
  non_periodic,        // no limit cycle within the period budget
  measurement_quality, // FRF record did not settle
  io,                  // file system problems
};

// Coarse grouping used for CLI exit codes.
enum class ErrorCategory { validation = 2, convergence = 3, numerical = 4 };

inline ErrorCategory category_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::domain:
    case ErrorKind::validation:
    case ErrorKind::description:
    case ErrorKind::no_edge:
    case ErrorKind::excluded_frequency:
    case ErrorKind::pole:
    case ErrorKind::io:
      return ErrorCategory::validation;
    case ErrorKind::iteration_failure:
    case ErrorKind::mode:
    case ErrorKind::non_periodic:
    case ErrorKind::measurement_quality:
    case ErrorKind::runaway:
      return ErrorCategory::convergence;
    default:
      return ErrorCategory::numerical;
  }
}

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::domain: return "domain";
    case ErrorKind::validation: return "validation";
    case ErrorKind::description: return "description";
    case ErrorKind::symmetry_violation: return "symmetry_violation";
    case ErrorKind::no_edge: return "no_edge";
    case ErrorKind::grazing_crossing: return "grazing_crossing";
    case ErrorKind::not_a_zero: return "not_a_zero";
    case ErrorKind::pole: return "pole";
    case ErrorKind::lossless_degeneracy: return "lossless_degeneracy";
    case ErrorKind::iteration_failure: return "iteration_failure";
    case ErrorKind::mode: return "mode";
    case ErrorKind::singularity: return "singularity";
    case ErrorKind::excluded_frequency: return "excluded_frequency";
    case ErrorKind::runaway: return "runaway";
    case ErrorKind::stiffness: return "stiffness";
    case ErrorKind::non_periodic: return "non_periodic";
    case ErrorKind::measurement_quality: return "measurement_quality";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

inline std::string_view to_string(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::validation: return "validation";
    case ErrorCategory::convergence: return "convergence";
    case ErrorCategory::numerical: return "numerical";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  ErrorCategory category() const noexcept { return category_of(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace gam
