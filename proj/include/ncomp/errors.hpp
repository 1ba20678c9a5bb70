#pragma once

#include <stdexcept>
#include <string>

namespace ncomp {

// Base for everything thrown by this library. Subtypes map to CLI exit codes:
// ParseError/IoError -> 2, the rest -> 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor/layer dimension mismatches.
struct ShapeError : Error {
  using Error::Error;
};

// Bad runtime values: out-of-range labels, empty datasets, inverted ranges.
struct ValueError : Error {
  using Error::Error;
};

// Operation invoked out of sequence (e.g. backward without a recorded forward).
struct StateError : Error {
  using Error::Error;
};

// Invalid or degenerate configuration: no prunable classes, step <= 0,
// degenerate codebook (k < 2), degenerate class (fewer than 2 weights).
struct ConfigError : Error {
  using Error::Error;
};

// Malformed input files: bad magic, version, truncation, checksum mismatch.
struct ParseError : Error {
  using Error::Error;
};

// Filesystem-level failures.
struct IoError : Error {
  using Error::Error;
};

}  // namespace ncomp
