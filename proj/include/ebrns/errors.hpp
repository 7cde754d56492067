#pragma once

#include <stdexcept>
#include <string>

namespace ebrns {

// Shape mismatch or otherwise ill-formed operands. Message names the
// operation and the offending shapes.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A matrix handed to the SPD solver stayed non-positive-definite after the
// whole jitter ladder. Carries the attempted jitter magnitudes in the message.
struct SingularMatrixError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Precondition of an operation violated (non-scalar loss, K too short, ...).
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad user-facing configuration (unknown key, out-of-range value, dim clash).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file. Message carries the line number where known.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem problem (missing path, unwritable output).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite value where the numeric contract promises finite entries
// (e.g. NaN loss during training). Message carries sample/step context.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ebrns
