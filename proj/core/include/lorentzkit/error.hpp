#pragma once

#include <stdexcept>
#include <string>

namespace lorentzkit {

// Process exit codes used by the CLI. Each exception class maps to one.
enum class ExitCode : int {
  kOk = 0,
  kValidation = 1,
  kNumeric = 2,
  kIo = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ExitCode::kValidation, what) {}
};

// Shape or length mismatch between operands.
class DimensionError : public ValidationError {
 public:
  explicit DimensionError(const std::string& what) : ValidationError("dimension error: " + what) {}
};

// A point failed the hyperboloid constraint or a tangent vector is not tangent.
class ConstraintError : public ValidationError {
 public:
  explicit ConstraintError(const std::string& what) : ValidationError("constraint error: " + what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ExitCode::kNumeric, "numeric error: " + what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ExitCode::kIo, "i/o error: " + what) {}
};

}  // namespace lorentzkit
