#pragma once

#include <stdexcept>
#include <string>

namespace twisted {

// Base of every error the library raises on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// An argument outside the mathematical domain of the operation.
class InputDomainError : public Error {
public:
    using Error::Error;
};

// A point pair at or near the cut locus; the caller resamples.
class DegeneratePairError : public Error {
public:
    using Error::Error;
};

// A transport ray with det(dF_t) <= 0 somewhere on the grid.
class RejectedRayError : public Error {
public:
    using Error::Error;
};

// Bad knobs: grids too coarse, caps exceeded, malformed configs.
class ConfigurationError : public Error {
public:
    using Error::Error;
};

// An infinite twisted coefficient reached a finite-only computation.
class NotApplicable : public Error {
public:
    using Error::Error;
};

} // namespace twisted
