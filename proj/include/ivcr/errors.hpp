#pragma once

#include <stdexcept>
#include <string>

namespace ivcr {

/// Stable process exit codes used by the CLI.
enum class ExitCode : int {
  ok = 0,
  usage = 2,
  data = 3,
  numerical = 4,
};

/// Base class for all library errors. Carries the originating module name
/// and the exit code the CLI maps it to.
class Error : public std::runtime_error {
 public:
  Error(std::string module, ExitCode code, const std::string& what)
      : std::runtime_error("[" + module + "] " + what),
        module_(std::move(module)),
        code_(code) {}

  const std::string& module() const noexcept { return module_; }
  ExitCode code() const noexcept { return code_; }

 private:
  std::string module_;
  ExitCode code_;
};

class DataError : public Error {
 public:
  DataError(std::string module, const std::string& what)
      : Error(std::move(module), ExitCode::data, what) {}
};

class NumericalError : public Error {
 public:
  NumericalError(std::string module, const std::string& what)
      : Error(std::move(module), ExitCode::numerical, what) {}
};

class UsageError : public Error {
 public:
  UsageError(std::string module, const std::string& what)
      : Error(std::move(module), ExitCode::usage, what) {}
};

}  // namespace ivcr
