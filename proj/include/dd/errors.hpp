#pragma once

#include <stdexcept>
#include <string>

namespace dd {

// Error taxonomy used across the library. Every contract violation maps to
// one of these; callers can catch the base Error for blanket handling.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad argument value (out-of-range timestep, negative lambda, ...).
struct ArgumentError : Error {
    using Error::Error;
};

// Tensor dimensionality mismatch.
struct ShapeError : Error {
    using Error::Error;
};

// NaN/Inf produced by a computation.
struct NumericError : Error {
    using Error::Error;
};

// Operation called in the wrong order (backward before forward, ...).
struct StateError : Error {
    using Error::Error;
};

// Malformed file (bad magic, truncated blob, version mismatch).
struct FormatError : Error {
    using Error::Error;
};

// Malformed config; message carries "file:line:" anchoring.
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace dd
