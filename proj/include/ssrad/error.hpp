#pragma once

#include <stdexcept>
#include <string>

namespace ssrad {

// Invalid configuration: bad hyperparameters, incompatible extents, odd SE
// batch size, and similar. Maps to CLI exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Broken or inconsistent input data: truncated files, version mismatches,
// unresolvable manifests. Maps to CLI exit code 2.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numeric failure: non-finite activations or gradients, degenerate variance,
// zero-norm vectors. Maps to CLI exit code 3.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace ssrad
