#pragma once

#include <stdexcept>
#include <string>

namespace apsde {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite or otherwise unusable state vector.
class InvalidStateError : public Error {
public:
    using Error::Error;
};

/// Out-of-range numerical parameter (time step, quadrature order, theta, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Operation only realized for a subset of dimensions.
class UnsupportedDimensionError : public Error {
public:
    using Error::Error;
};

/// A model or test function lacks a derivative the operation needs.
class CapabilityError : public Error {
public:
    using Error::Error;
};

/// Model coefficients violate a structural assumption (e.g. f <= 0).
class ModelViolationError : public Error {
public:
    using Error::Error;
};

/// Bad scheme/model pairing, unknown registry name, malformed config.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Monte Carlo run with too many non-finite trajectories.
class NumericalFailureError : public Error {
public:
    using Error::Error;
};

/// Order fit without enough usable rows.
class InsufficientDataError : public Error {
public:
    using Error::Error;
};

} // namespace apsde
