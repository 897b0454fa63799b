#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace trendbal {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file or cell.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Unknown unit, period or column label.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// A (unit, period) cell is absent from the input panel.
class BalancedPanelError : public Error {
 public:
  BalancedPanelError(std::string unit, std::string period)
      : Error("unbalanced panel: missing cell for unit '" + unit +
              "' in period '" + period + "'"),
        unit_(std::move(unit)),
        period_(std::move(period)) {}

  const std::string& unit() const { return unit_; }
  const std::string& period() const { return period_; }

 private:
  std::string unit_;
  std::string period_;
};

/// Matrix lacks the rank an operation requires. `index` names the first
/// dependent row or column, or -1 when not applicable.
class RankError : public Error {
 public:
  RankError(const std::string& what, Eigen::Index index = -1)
      : Error(what), index_(index) {}
  Eigen::Index index() const { return index_; }

 private:
  Eigen::Index index_;
};

/// Dimensions incompatible with the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Singular system that a positive tuning parameter would repair.
class SingularityError : public Error {
 public:
  using Error::Error;
};

/// Ill-formed argument (negative penalty, out-of-range mixing weight, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// ATE weighting vector violates its sign/sum contract.
class WeightContractError : public Error {
 public:
  using Error::Error;
};

/// Not enough observations for a regression-based diagnostic.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// The equality/nonnegativity system of a QP has no solution. The
/// certificate y satisfies A'y <= 0 on bounded coordinates, A'y = 0 on free
/// ones, and b'y > 0.
class InfeasibleError : public Error {
 public:
  InfeasibleError(const std::string& what, Eigen::VectorXd certificate)
      : Error(what), certificate_(std::move(certificate)) {}
  const Eigen::VectorXd& certificate() const { return certificate_; }

 private:
  Eigen::VectorXd certificate_;
};

/// Iteration budget exhausted before a KKT point was certified.
class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& what, Eigen::VectorXd best_iterate,
                      double residual)
      : Error(what), best_(std::move(best_iterate)), residual_(residual) {}
  const Eigen::VectorXd& best_iterate() const { return best_; }
  double residual() const { return residual_; }

 private:
  Eigen::VectorXd best_;
  double residual_;
};

}  // namespace trendbal
