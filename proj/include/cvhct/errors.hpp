#pragma once

#include <stdexcept>
#include <string>

namespace cvhct {

/// Process exit codes shared by every CLI command.
enum class ExitCode : int {
  kOk = 0,
  kValidation = 2,
  kRuntime = 3,
  kIo = 4,
};

/// Root of the project's exception hierarchy. Each subclass carries the exit
/// code the CLI maps it to.
class Error : public std::runtime_error {
 public:
  Error(const std::string& what, ExitCode code)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

// Validation-class failures (exit 2).
class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& w) : Error(w, ExitCode::kValidation) {}
};
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& w) : Error(w, ExitCode::kValidation) {}
};
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& w) : Error(w, ExitCode::kValidation) {}
};
class IntegrityError : public Error {
 public:
  explicit IntegrityError(const std::string& w) : Error(w, ExitCode::kValidation) {}
};
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& w) : Error(w, ExitCode::kValidation) {}
};

// Runtime failures (exit 3).
class NumericHealthError : public Error {
 public:
  NumericHealthError(const std::string& term, long step, double value)
      : Error("non-finite loss term '" + term + "' at step " + std::to_string(step) +
                  " (value " + std::to_string(value) + ")",
              ExitCode::kRuntime),
        term_(term),
        step_(step) {}
  const std::string& term() const noexcept { return term_; }
  long step() const noexcept { return step_; }

 private:
  std::string term_;
  long step_;
};

// Filesystem failures (exit 4).
class IoError : public Error {
 public:
  explicit IoError(const std::string& w) : Error(w, ExitCode::kIo) {}
};

}  // namespace cvhct
