#pragma once

#include <stdexcept>
#include <string>

namespace netsem {

/// Base class for every error raised by the library. The `exit_code` is the
/// process status the command-line driver reports for this error family.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, int exit_code)
      : std::runtime_error(what), exit_code_(exit_code) {}
  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

// Bad shapes, out-of-range indices, negative weights, malformed inputs.
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(what, 2) {}
};

// Malformed config or data files.
class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& what) : Error(what, 2) {}
};

// A mathematical precondition (stability, dominance) does not hold.
class PreconditionError : public Error {
 public:
  PreconditionError(const std::string& what, double margin)
      : Error(what, 3), margin_(margin) {}
  double margin() const noexcept { return margin_; }

 private:
  double margin_;
};

// Singular systems, non-convergence, rank deficiency.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(what, 4) {}
};

// An object was used in a state that does not support the call
// (for example predicting from an unconverged fit).
class StateError : public Error {
 public:
  explicit StateError(const std::string& what) : Error(what, 4) {}
};

class SeparationError : public NumericError {
 public:
  explicit SeparationError(const std::string& what) : NumericError(what) {}
};

class DesignError : public NumericError {
 public:
  explicit DesignError(const std::string& what) : NumericError(what) {}
};

}  // namespace netsem
