#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace otcr {

// Base of every error thrown by the library. `kind()` is a stable,
// machine-readable tag used by the CLI error object.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* kind() const noexcept { return "error"; }
};

class DimensionError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "dimension"; }
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::size_t iterations)
      : Error(what + " (after " + std::to_string(iterations) + " iterations)"),
        iterations_(iterations) {}
  std::size_t iterations() const noexcept { return iterations_; }
  const char* kind() const noexcept override { return "convergence"; }

 private:
  std::size_t iterations_;
};

class InfeasibleMarginals : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "infeasible_marginals"; }
};

// Test oracles refuse inputs beyond the size they can enumerate.
class OracleLimitError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "oracle_limit"; }
};

class NumericalError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "numerical"; }
};

class StaleTapeError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "stale_tape"; }
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row, std::string column)
      : Error("row " + std::to_string(row) + ", column '" + column + "': " + what),
        row_(row),
        column_(std::move(column)) {}
  std::size_t row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }
  const char* kind() const noexcept override { return "parse"; }

 private:
  std::size_t row_;
  std::string column_;
};

class DataError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "data"; }
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : Error(field + ": " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }
  const char* kind() const noexcept override { return "config"; }

 private:
  std::string field_;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "checkpoint"; }
};

}  // namespace otcr
