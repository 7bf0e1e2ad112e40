#pragma once

#include <functional>
#include <stdexcept>
#include <string>

namespace mdid {

// Base for every failure raised by the engine. `stage` is filled in by the
// pipeline when an error crosses a stage boundary.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or incomplete input data (missing years, bad CSV cells, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

// Arguments violating an operation's preconditions.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class InfeasibleError : public Error {
 public:
  using Error::Error;
};

class DegenerateError : public Error {
 public:
  using Error::Error;
};

class NonIdentifiableError : public Error {
 public:
  using Error::Error;
};

class SeparationError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, int iterations)
      : Error(what), iterations_(iterations) {}
  int iterations() const { return iterations_; }

 private:
  int iterations_;
};

using WarningHandler = std::function<void(const std::string&)>;

// Installs a process-wide sink for non-fatal diagnostics. The default sink
// writes "warning: <msg>" to stderr. Returns the previous handler.
WarningHandler set_warning_handler(WarningHandler handler);
void warn(const std::string& message);

}  // namespace mdid
