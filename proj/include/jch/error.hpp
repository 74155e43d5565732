#pragma once

#include <stdexcept>
#include <string>

namespace jch {

// Base for every error raised by the library. The CLI maps the subclasses
// onto its exit codes (parse 2, infeasible 3, numerical 4).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input: config grammar, CSV schema, bad arguments.
class InputError : public Error {
public:
    explicit InputError(const std::string& what, int line = 0)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line)
    {
    }
    int line() const noexcept { return line_; }

private:
    int line_;
};

// Well-formed request that has no physical or computational solution
// (zigzag chain, sector too large, mismatched excitation count).
class InfeasibleError : public Error {
public:
    using Error::Error;
};

// An iterative method failed to meet its tolerance.
class NumericalError : public Error {
public:
    NumericalError(const std::string& what, double residual)
        : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual)
    {
    }
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

}  // namespace jch
