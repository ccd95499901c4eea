#pragma once

#include <stdexcept>
#include <string>

namespace shibboleth {

// Every error raised by the library derives from Error. The CLI maps the
// concrete type to an exit code (see ExitCode in pipeline.hpp).
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or inconsistent arguments.
class ConfigError : public Error {
public:
  using Error::Error;
};

// Unreadable, malformed or degenerate input data.
class DataError : public Error {
public:
  using Error::Error;
};

// Non-finite loss during training.
class DivergenceError : public Error {
public:
  using Error::Error;
};

// An attribution method was requested that the model cannot serve
// (intrinsic attribution on a model trained without the LIL head).
class UnsupportedMethodError : public ConfigError {
public:
  using ConfigError::ConfigError;
};

} // namespace shibboleth
