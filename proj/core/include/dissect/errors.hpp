#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dissect {

// Base for every domain error. `kind()` is a stable machine-readable tag
// that the CLI reports in its JSON error line.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::size_t column, const std::string& message)
      : Error("syntax-error", "line " + std::to_string(line) + ", column " + std::to_string(column) +
                                  ": " + message),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

// Netlist validation failures. Kinds: unknown-device, unsupported-device,
// dangling-node, missing-ground, disconnected, nonpositive-value,
// duplicate-branch, unknown-parameter.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  explicit DimensionMismatch(const std::string& message) : Error("dimension-mismatch", message) {}
};

class NonFiniteError : public Error {
 public:
  NonFiniteError(const std::string& device, const std::string& message)
      : Error("non-finite", device + ": " + message), device_(device) {}
  const std::string& device() const noexcept { return device_; }

 private:
  std::string device_;
};

class AssumptionViolation : public Error {
 public:
  explicit AssumptionViolation(const std::string& message) : Error("assumption-violation", message) {}
};

class IndexTooHigh : public Error {
 public:
  explicit IndexTooHigh(const std::string& message) : Error("index-too-high", message) {}
};

class WrongIndex : public Error {
 public:
  explicit WrongIndex(const std::string& message) : Error("wrong-index", message) {}
};

class NoConvergence : public Error {
 public:
  NoConvergence(const std::string& message, int iterations)
      : Error("no-convergence", message), iterations_(iterations) {}
  int iterations() const noexcept { return iterations_; }

 private:
  int iterations_;
};

class SingularJacobian : public Error {
 public:
  explicit SingularJacobian(const std::string& message) : Error("singular-jacobian", message) {}
};

class GridExhausted : public Error {
 public:
  GridExhausted() : Error("grid-exhausted", "every grid point is already in the training set") {}
};

class ZeroTruthNorm : public Error {
 public:
  ZeroTruthNorm() : Error("zero-truth-norm", "reference values have zero 2-norm") {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("io-error", message) {}
};

}  // namespace dissect
