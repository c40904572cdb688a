#pragma once

#include <stdexcept>

namespace actlearn {

// Invalid user-supplied configuration (regions, grids, config files).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A documented precondition of an operation was violated.
struct PreconditionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed data (non-finite entries, dimension mismatches).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Operation called on an object in the wrong state (e.g. unfit learner).
struct StateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical breakdown that should be unreachable after regularization.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace actlearn
