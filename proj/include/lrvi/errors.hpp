#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lrvi {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller violated a documented precondition (dimension mismatch, bad argument).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A computation produced a non-finite intermediate.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A matrix factorization failed (e.g. Cholesky of a non-SPD matrix).
class MatrixError : public Error {
 public:
  using Error::Error;
};

/// A variational state violates its invariants.
class InvalidStateError : public Error {
 public:
  using Error::Error;
};

/// Configuration or experiment specification is invalid.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A planner formula was evaluated outside its domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// QR of the stage-1 iterate lost rank.
class DegenerateIterateError : public Error {
 public:
  DegenerateIterateError(int iteration, const std::string& what)
      : Error(what), iteration_(iteration) {}
  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

/// The budget cannot fund a single iteration under the allocation rule.
class BudgetInfeasibleError : public Error {
 public:
  BudgetInfeasibleError(double minimal_budget, const std::string& what)
      : Error(what), minimal_budget_(minimal_budget) {}
  double minimal_budget() const noexcept { return minimal_budget_; }

 private:
  double minimal_budget_;
};

/// An iterative solver ran out of iterations.
class NonConvergenceError : public Error {
 public:
  NonConvergenceError(double last_residual, const std::string& what)
      : Error(what), last_residual_(last_residual) {}
  double last_residual() const noexcept { return last_residual_; }

 private:
  double last_residual_;
};

/// Malformed input file. Row and column are 1-based; 0 means "not applicable".
class ParseError : public Error {
 public:
  ParseError(std::size_t row, std::size_t column, const std::string& what)
      : Error(what), row_(row), column_(column) {}
  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

}  // namespace lrvi
