#pragma once

#include <stdexcept>
#include <string>

namespace vpatch {

/// Bad user input: malformed configuration, missing samples, bad flags.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The constraint set is empty (cell budget exceeds the admissible region).
class InfeasibleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A linear solve failed to reach its residual bound.
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& what, double residual)
        : std::runtime_error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// API misuse: mismatched grids, unconverged results, bad preconditions.
class UsageError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace vpatch
