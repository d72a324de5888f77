#pragma once

#include <stdexcept>
#include <string>

namespace lfd {

// Exit codes used by the command-line front end.
enum class ExitCode : int {
  kSuccess = 0,
  kValidation = 2,
  kIo = 3,
  kNumerical = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Bad parameters, violated preconditions, malformed inputs.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ExitCode::kValidation, what) {}
};

/// Missing, unreadable or truncated files.
class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ExitCode::kIo, what) {}
};

/// Solver breakdown: non-convergence, singular systems.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ExitCode::kNumerical, what) {}
};

}  // namespace lfd
