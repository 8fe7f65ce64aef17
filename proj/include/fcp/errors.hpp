#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fcp {

/// Base for everything this library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input, bad configuration or malformed files (CLI exit code 1).
class UsageError : public Error {
public:
    using Error::Error;
};

/// Failure of a numerical procedure on otherwise valid input (CLI exit code 2).
class NumericalError : public Error {
public:
    using Error::Error;
};

class ShapeMismatch : public UsageError {
public:
    using UsageError::UsageError;
};

class TapeConsumed : public UsageError {
public:
    TapeConsumed() : UsageError("tape already consumed by a backward pass") {}
};

class MaxStepsExceeded : public NumericalError {
public:
    explicit MaxStepsExceeded(std::size_t steps)
        : NumericalError("ODE integration exceeded " + std::to_string(steps) + " steps") {}
};

class NonFiniteState : public NumericalError {
public:
    explicit NonFiniteState(double t)
        : NumericalError("non-finite ODE state at t=" + std::to_string(t)) {}
};

class ZeroMean : public NumericalError {
public:
    ZeroMean() : NumericalError("relative standard error undefined for zero mean") {}
};

class GateUnreachable : public NumericalError {
public:
    explicit GateUnreachable(std::size_t max_n)
        : NumericalError("relative SE gate not reached at N=" + std::to_string(max_n)) {}
};

class NonFiniteDeterminant : public NumericalError {
public:
    NonFiniteDeterminant() : NumericalError("non-finite Jacobian determinant in set size estimate") {}
};

class SingularGram : public NumericalError {
public:
    SingularGram() : NumericalError("Gram matrix singular beyond ridge jitter") {}
};

class UnstableSystem : public UsageError {
public:
    explicit UnstableSystem(double rho)
        : UsageError("UnstableSystem: VAR(1) spectral radius " + std::to_string(rho) + " >= 1") {}
};

class MalformedRow : public UsageError {
public:
    explicit MalformedRow(std::size_t line)
        : UsageError("MalformedRow at line " + std::to_string(line)), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class NonMonotoneTimestamp : public UsageError {
public:
    explicit NonMonotoneTimestamp(std::size_t line)
        : UsageError("NonMonotoneTimestamp at line " + std::to_string(line)), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class NaNValue : public UsageError {
public:
    NaNValue(std::size_t line, std::size_t col)
        : UsageError("NaNValue at line " + std::to_string(line) + ", column " + std::to_string(col)),
          line_(line), col_(col) {}
    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return col_; }

private:
    std::size_t line_;
    std::size_t col_;
};

class TooShort : public UsageError {
public:
    using UsageError::UsageError;
};

class EmptyInput : public UsageError {
public:
    using UsageError::UsageError;
};

class LengthMismatch : public UsageError {
public:
    using UsageError::UsageError;
};

class NotTwoDimensional : public UsageError {
public:
    NotTwoDimensional() : UsageError("region boundaries require d_y = 2") {}
};

}  // namespace fcp
