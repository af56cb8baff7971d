#pragma once

#include <stdexcept>
#include <string>

namespace qcd {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input value (non-finite observation, dimension mismatch).
class InputError : public Error {
public:
    using Error::Error;
};

/// Operation invalid for the current object state (step after stop, empty window).
class StateError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration or policy parameters.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Numerical failure: quadrature non-convergence, non-finite log ratio.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace qcd
