#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace lgm {

// Base class for every error raised by the library.  Callers that want a
// single catch site can catch this; the subclasses carry structured data
// (pivot indices, traces) for callers that want to react programmatically.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Argument shapes or values violate a documented precondition.
class ContractError : public Error {
public:
  using Error::Error;
};

// A non-finite value appeared while evaluating or differentiating a
// function.  `op` names the operation that produced it, `node` is the tape
// slot of the offending result (-1 when no tape was active).
class NumericalDomainError : public Error {
public:
  explicit NumericalDomainError(const std::string& msg)
      : Error(msg), op_(), node_(-1) {}
  NumericalDomainError(const std::string& op, std::int64_t node)
      : Error("non-finite value produced by '" + op + "' at tape node " +
              std::to_string(node)),
        op_(op), node_(node) {}

  const std::string& op() const { return op_; }
  std::int64_t node() const { return node_; }

private:
  std::string op_;
  std::int64_t node_;
};

// Cholesky or blockwise square root hit a non-positive pivot.  `pivot` is
// the zero-based index of the failing diagonal entry.
class NotPositiveDefiniteError : public Error {
public:
  explicit NotPositiveDefiniteError(int pivot)
      : Error("matrix not positive definite: pivot " + std::to_string(pivot) +
              " is not positive"),
        pivot_(pivot) {}

  int pivot() const { return pivot_; }

private:
  int pivot_;
};

// LU elimination found no usable pivot in column `pivot`.
class SingularMatrixError : public Error {
public:
  explicit SingularMatrixError(int pivot)
      : Error("matrix is numerically singular at pivot " +
              std::to_string(pivot)),
        pivot_(pivot) {}

  int pivot() const { return pivot_; }

private:
  int pivot_;
};

// A tape was asked to sweep twice, or a sweep was requested with no
// recording active.
class TapeStateError : public Error {
public:
  using Error::Error;
};

// A sweep plan is malformed (reverse before forward, unsupported depth,
// seed length mismatch).
class PlanError : public Error {
public:
  using Error::Error;
};

// The selected factorization strategy cannot handle the matrices it was
// given (e.g. a curvature root requested for an indefinite block).
class StrategyUnsuitableError : public Error {
public:
  StrategyUnsuitableError(const std::string& what, int pivot)
      : Error(what), pivot_(pivot) {}

  int pivot() const { return pivot_; }

private:
  int pivot_;
};

// Newton iteration ran out of iterations or the step halving loop could
// not find an improving point.  Carries the accepted objective trace.
class NonConvergenceError : public Error {
public:
  NonConvergenceError(const std::string& what, std::vector<double> trace)
      : Error(what), trace_(std::move(trace)) {}

  const std::vector<double>& psi_trace() const { return trace_; }

private:
  std::vector<double> trace_;
};

// A covariance matrix stayed indefinite after the jitter ladder was
// exhausted.
class ConditioningError : public Error {
public:
  using Error::Error;
};

// A model rejects parameter values it cannot evaluate (e.g. coincident
// elimination rates).
class DegenerateParameterError : public Error {
public:
  using Error::Error;
};

// A model does not support the differentiation depth requested of it.
class CapabilityError : public Error {
public:
  using Error::Error;
};

// Run configuration is malformed: unknown keys, missing sections, bad types.
class ConfigError : public Error {
public:
  using Error::Error;
};

// An input file does not match its declared schema.  `line` is 1-based.
class DataFormatError : public Error {
public:
  DataFormatError(const std::string& what, long line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}

  long line() const { return line_; }

private:
  long line_;
};

}  // namespace lgm
