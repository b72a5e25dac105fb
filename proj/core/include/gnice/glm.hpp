#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "gnice/errors.hpp"

namespace gnice {

/// Gaussian linear model fitted by least squares.
struct LinearModel {
  Eigen::VectorXd coefficients;
  double residual_sd = 0.0;
  /// Observed response range in the training data.
  double range_min = 0.0;
  double range_max = 0.0;
  int rank = 0;
  /// Columns aliased away by the rank-revealing decomposition (coefficient 0).
  std::vector<int> dropped_columns;

  double predict(std::span<const double> x) const;
};

struct LogisticFitOptions {
  /// Convergence threshold on the max-norm of the mean log-likelihood gradient.
  double tol = 1e-8;
  int max_iter = 100;
};

/// Bernoulli GLM with logit link.
struct LogisticModel {
  Eigen::VectorXd coefficients;
  int iterations = 0;
  double gradient_norm = 0.0;
  double log_likelihood = 0.0;
  /// Log-likelihood after each accepted iteration, starting from the initial point.
  std::vector<double> log_likelihood_trace;
  /// Set when some linear predictor exceeded the separation threshold.
  bool separation = false;
  std::vector<int> dropped_columns;

  double linear_predictor(std::span<const double> x) const;
  double probability(std::span<const double> x) const;
};

/// |linear predictor| beyond which a fit is flagged as (quasi-)separated.
inline constexpr double kSeparationThreshold = 30.0;

class LogisticConvergenceError : public NumericError {
 public:
  LogisticConvergenceError(const std::string& what, LogisticModel last)
      : NumericError(what), last_(std::move(last)) {}
  const LogisticModel& last_iterate() const { return last_; }

 private:
  LogisticModel last_;
};

/// Ordinary least squares through a column-pivoted QR on internally standardized
/// columns; coefficients are reported on the original scale. Rank-deficient
/// columns get zero coefficients and a logged warning. residual_sd is
/// sqrt(RSS / (rows - rank)). Throws std::invalid_argument on zero rows,
/// rows < columns, size mismatch, or non-finite input.
LinearModel fit_linear(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

/// Newton/IRLS maximizer of the Bernoulli log-likelihood with step halving.
/// Throws std::domain_error if y is not binary, LogisticConvergenceError if the
/// gradient criterion is not met within max_iter (unless separation was detected,
/// in which case the flagged finite iterate is returned).
LogisticModel fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, LogisticFitOptions options = {});

}  // namespace gnice
