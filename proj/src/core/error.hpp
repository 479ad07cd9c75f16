#pragma once

#include <stdexcept>
#include <string>

namespace xdhom {

enum class ErrorKind {
  Configuration,
  Geometry,
  Resolution,
  Coefficient,
  Parameter,
  Input,
  Solver,
  Step,
  Io,
  Internal,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Krylov or Newton failure. Carries the best residual reached.
class SolverError : public Error {
 public:
  SolverError(ErrorKind kind, const std::string& message, double residual)
      : Error(kind, message), residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace xdhom
