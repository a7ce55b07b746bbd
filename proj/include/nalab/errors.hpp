#pragma once

#include <stdexcept>
#include <string>

namespace nalab {

// Root of every error raised by the library. The category decides the CLI
// exit code (see cli.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration, unknown keys, degenerate settings. Exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A required artifact (checkpoint, fixture) is missing. Exit code 3.
class DependencyError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss/gradient or another fault during optimisation. Exit code 4.
class TrainingFault : public Error {
 public:
  using Error::Error;
};

// Shape or length mismatch between cooperating values.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// A precondition of an operation was violated by the caller.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Operation called in the wrong phase (stepping a finished episode, stale cache).
class LifecycleError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

// Malformed tabular instances and other data that fails validation.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Oracle-only functionality requested without global-state access.
class ModeError : public Error {
 public:
  using Error::Error;
};

}  // namespace nalab
