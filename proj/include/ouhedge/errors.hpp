#pragma once

#include <stdexcept>
#include <string>

namespace ouhedge {

// Invalid user-facing configuration (bad parameters, malformed config files).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Exponential-moment condition ∫(e^{Cz}-1)ν(dz) < ∞ violated.
class MomentConditionError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Explicit-scheme step too large for stability.
class StepSizeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Singular or numerically non-invertible matrix; carries the condition number.
class LinearAlgebraError : public std::runtime_error {
public:
    LinearAlgebraError(const std::string& what, double condition_number)
        : std::runtime_error(what + " (condition number " + std::to_string(condition_number) + ")"),
          condition_number_(condition_number) {}

    double condition_number() const noexcept { return condition_number_; }

private:
    double condition_number_;
};

// Broken internal invariant (e.g. a jump time missing from a merged grid).
class InternalError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace ouhedge
