#pragma once

#include <stdexcept>
#include <string>

namespace irg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An argument lies outside the mathematical domain of the operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// An iterative method exhausted its budget. Carries the last iterate.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double last_iterate, int iterations)
        : Error(what), last_iterate_(last_iterate), iterations_(iterations) {}

    double last_iterate() const noexcept { return last_iterate_; }
    int iterations() const noexcept { return iterations_; }

private:
    double last_iterate_;
    int iterations_;
};

/// A truncation window carries (numerically) no probability mass.
class DegenerateWindowError : public DomainError {
public:
    using DomainError::DomainError;
};

/// Mixture posterior weights have a vanishing normalizer.
class DegenerateResponsibilityError : public DomainError {
public:
    using DomainError::DomainError;
};

/// A Jacobian entry is not representable because the density at the draw underflowed.
class OverflowError : public Error {
public:
    using Error::Error;
};

/// A rejection sampler exceeded its proposal cap.
class SamplerError : public Error {
public:
    using Error::Error;
};

}  // namespace irg
