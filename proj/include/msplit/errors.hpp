#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace msplit {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad input data or inconsistent configuration.
class ValidationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Numerical failures: rank deficiency, non-convergence, degenerate signal.
class NumericalError : public Error {
public:
    using Error::Error;
};

class RankDeficiencyError : public NumericalError {
public:
    RankDeficiencyError(const std::string& what, std::vector<int> offending)
        : NumericalError(what), offending_columns(std::move(offending)) {}

    // Positions within the fitted subset, most degenerate first.
    std::vector<int> offending_columns;
};

class ConvergenceError : public NumericalError {
public:
    ConvergenceError(const std::string& what, long iterations, double last_change)
        : NumericalError(what), iterations(iterations), last_change(last_change) {}

    long iterations;
    double last_change;
};

} // namespace msplit
