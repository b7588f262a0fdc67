#pragma once

#include <stdexcept>
#include <string>

namespace adafuse {

// Exception hierarchy. Every error raised by the library derives from Error;
// the CLI maps the concrete type onto a process exit code.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Out-of-range scalar arguments (rates, ranges, thresholds).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Malformed data handed to an operation (labels, empty lists, missing modality).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Object in the wrong state for the request (missing grads, frozen-contract breach).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration (architecture, config file, generator settings).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A file could not be decoded. Carries file name and byte offset in the message.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Required upstream artifact is missing.
class DependencyError : public Error {
 public:
  using Error::Error;
};

/// A loss function gave different values on repeated calls.
class DeterminismError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf was produced.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace adafuse
