#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace confocal {

// Base for every error raised by the library. Subclasses map onto the CLI exit codes:
// validation-type errors exit with 2, numerical non-convergence with 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidGeometry : public Error {
 public:
  using Error::Error;
};

class UnstableCavity : public InvalidGeometry {
 public:
  using InvalidGeometry::InvalidGeometry;
};

class ResolutionError : public Error {
 public:
  using Error::Error;
};

class GridMismatch : public Error {
 public:
  using Error::Error;
};

class ValueRangeError : public Error {
 public:
  using Error::Error;
};

class PassivityViolation : public Error {
 public:
  using Error::Error;
};

class DegenerateInput : public Error {
 public:
  using Error::Error;
};

class ClippingError : public Error {
 public:
  using Error::Error;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

// Carries every violation found while validating an input, not just the first.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<std::string> violations)
      : Error(join(violations)), violations_(std::move(violations)) {}
  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) {
      if (!out.empty()) out += "; ";
      out += s;
    }
    return out;
  }
  std::vector<std::string> violations_;
};

}  // namespace confocal
