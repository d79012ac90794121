#pragma once

#include <stdexcept>
#include <string>

namespace abp {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid argument: bad parameter value, shape mismatch, wrong dimension.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Input outside the mathematical domain of an operation (log of zero, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// A time step produced values outside tolerance; the step size is too large.
class StepSizeError : public Error {
public:
    using Error::Error;
};

/// Velocity truncation of a kinetic state carries non-negligible mass.
class TruncationError : public Error {
public:
    using Error::Error;
};

class FitError : public Error {
public:
    using Error::Error;
};

class ScheduleDomainError : public Error {
public:
    using Error::Error;
};

/// Malformed experiment configuration; the message names the offending key.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace abp
