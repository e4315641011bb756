#pragma once

#include <stdexcept>
#include <string>

namespace hignn {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shapes, widths or sizes that do not fit together.
class StructuralError : public Error {
public:
    using Error::Error;
};

/// Values outside their documented domain (non-finite, negative, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Malformed or truncated files.
class IoError : public Error {
public:
    using Error::Error;
};

/// Bad configuration files or flags.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Misuse of an API precondition (e.g. backward from a non-scalar).
class ContractError : public Error {
public:
    using Error::Error;
};

} // namespace hignn
