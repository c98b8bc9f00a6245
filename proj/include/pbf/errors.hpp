#pragma once

#include <stdexcept>
#include <string>

namespace pbf {

/// Base class for all errors thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Incompatible matrix/vector dimensions or malformed arguments.
struct DimensionMismatch : Error {
  using Error::Error;
};

/// A data record is too short for the requested window depth.
struct SequenceTooShort : Error {
  using Error::Error;
};

/// A linear system is numerically singular.
struct SingularMatrix : Error {
  using Error::Error;
};

/// The stationarity system of an equality-constrained program is singular
/// (rank-deficient constraints or an ill-posed objective).
struct SingularKkt : Error {
  using Error::Error;
};

/// Segment chaining needs matching window depths (t_init == n_h).
struct SplitRequiresEqualDepths : Error {
  using Error::Error;
};

/// Rejection sampling failed to find points inside a set.
struct SamplingStarved : Error {
  using Error::Error;
};

/// An inner maximization is unbounded over the given set.
struct UnboundedInnerProblem : Error {
  using Error::Error;
};

/// The exact branch-and-bound solver needs finite variable boxes.
struct BoxMissing : Error {
  using Error::Error;
};

/// An iterative routine failed to reach its tolerance for numerical reasons.
struct NumericalFailure : Error {
  using Error::Error;
};

/// Input signal generation could not reach the requested excitation order.
struct ExcitationFailed : Error {
  using Error::Error;
};

/// Random system generation could not meet the requested properties.
struct GenerationFailed : Error {
  using Error::Error;
};

/// A data file could not be parsed.
struct MalformedData : Error {
  using Error::Error;
};

/// A configuration file is invalid or has unknown keys.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace pbf
