#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sdcm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text. `line()` is 1-based, 0 when not tied to a line.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t line)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + message : message), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A numerical subproblem produced a non-finite value.
class SolverError : public Error {
 public:
  SolverError(const std::string& message, std::size_t node)
      : Error("node " + std::to_string(node) + ": " + message), node_(node) {}

  std::size_t node() const noexcept { return node_; }

 private:
  std::size_t node_;
};

/// Caller broke a documented precondition (e.g. passed an unobserved label
/// to a likelihood).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace sdcm
