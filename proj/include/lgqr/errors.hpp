#pragma once

#include <stdexcept>
#include <string>

namespace lgqr {

// Numerical failures (factorizations, solver non-convergence, degenerate
// curvature). Messages carry enough context to reproduce the failing call.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when the curvature estimate is non-positive, i.e. all residuals fall
// outside the bandwidth.
struct DegenerateCurvature : NumericalError {
  using NumericalError::NumericalError;
};

// Malformed configuration (bad values, unknown keys, schema violations).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed data files (missing columns, NA values, parse failures).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace lgqr
