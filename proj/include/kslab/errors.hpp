#pragma once

#include <stdexcept>
#include <string>

namespace kslab {

/// Bad arguments or a violated operation precondition.
struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Invalid or inconsistent experiment configuration.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numerical failure inside a solver (instability, weight collapse, ...).
struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Broken internal invariant; indicates a bug, not a user mistake.
struct InternalError : std::logic_error {
    using std::logic_error::logic_error;
};

} // namespace kslab
