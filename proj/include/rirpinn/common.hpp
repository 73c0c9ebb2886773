#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace rirpinn {

using Eigen::Index;

// Malformed or out-of-range configuration (file, CLI, or programmatic).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numeric input violates a documented precondition (geometry, signals, ...).
struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Training or evaluation produced non-finite values.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// API misuse (e.g. backprop on a loss that never touched the tape).
struct UsageError : std::logic_error {
    using std::logic_error::logic_error;
};

}  // namespace rirpinn
