#pragma once

#include <stdexcept>
#include <string>

namespace kpg {

// Incompatible tensor, image or matrix extents.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A documented precondition of an operation was violated by the caller.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Out-of-range configuration or operation parameter.
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Numerically degenerate input: zero-variance batches, zero-norm vectors,
// rank-deficient point configurations.
struct DegenerateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Robust estimation produced no acceptable model.
struct EstimationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A requested allocation exceeded a configured bound.
struct ResourceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File parsing, decoding or writing failure.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values appeared during training.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace kpg
