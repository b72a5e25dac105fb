#include "gnice/glm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gnice/distributions.hpp"
#include "gnice/log.hpp"

namespace gnice {

namespace {

// Column scaling used for conditioning. With an all-ones column present the other
// columns are z-scored, otherwise they are divided by their root mean square.
struct Standardizer {
  Eigen::VectorXd center;
  Eigen::VectorXd scale;  // 0 marks a constant non-intercept column
  int intercept = -1;

  explicit Standardizer(const Eigen::MatrixXd& X) {
    const auto n = static_cast<double>(X.rows());
    center = Eigen::VectorXd::Zero(X.cols());
    scale = Eigen::VectorXd::Ones(X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      if (intercept < 0 && (X.col(j).array() == 1.0).all()) intercept = static_cast<int>(j);
    }
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      if (j == intercept) continue;
      const auto col = X.col(j).array();
      if (intercept >= 0) {
        const double mean = col.sum() / n;
        const double sd = std::sqrt((col - mean).square().sum() / n);
        center(j) = mean;
        scale(j) = sd;
      } else {
        scale(j) = std::sqrt(col.square().sum() / n);
      }
    }
  }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const {
    Eigen::MatrixXd Z(X.rows(), X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      if (scale(j) > 0.0)
        Z.col(j) = (X.col(j).array() - center(j)) / scale(j);
      else
        Z.col(j).setZero();
    }
    return Z;
  }

  Eigen::VectorXd to_original(const Eigen::VectorXd& gamma) const {
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(gamma.size());
    double shift = 0.0;
    for (Eigen::Index j = 0; j < gamma.size(); ++j) {
      if (j == intercept || scale(j) == 0.0) continue;
      beta(j) = gamma(j) / scale(j);
      shift += beta(j) * center(j);
    }
    if (intercept >= 0) beta(intercept) = gamma(intercept) - shift;
    return beta;
  }

  std::vector<int> constant_columns() const {
    std::vector<int> out;
    for (Eigen::Index j = 0; j < scale.size(); ++j)
      if (scale(j) == 0.0) out.push_back(static_cast<int>(j));
    return out;
  }
};

void check_design(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() == 0) throw std::invalid_argument("design matrix has zero rows");
  if (X.rows() != y.size()) throw std::invalid_argument("design/response size mismatch");
  if (X.rows() < X.cols()) throw std::invalid_argument("design has fewer rows than columns");
  if (!X.allFinite() || !y.allFinite()) throw std::invalid_argument("non-finite entries in design or response");
}

constexpr double kRankThreshold = 1e-10;

// Columns left out of the basic solution: constant columns plus pivots past the rank.
template <typename Qr>
std::vector<int> dropped_from(const Qr& qr, const Standardizer& st) {
  std::vector<int> dropped = st.constant_columns();
  const auto& perm = qr.colsPermutation().indices();
  for (Eigen::Index i = qr.rank(); i < perm.size(); ++i) {
    const int col = perm(i);
    if (st.scale(col) != 0.0) dropped.push_back(col);
  }
  std::sort(dropped.begin(), dropped.end());
  return dropped;
}

void warn_dropped(std::string_view what, const std::vector<int>& dropped) {
  if (dropped.empty()) return;
  std::string msg = std::string(what) + ": rank-deficient design, zero coefficients for columns";
  for (int c : dropped) msg += " " + std::to_string(c);
  log_warning(msg);
}

double mean_log_likelihood(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += y(i) * eta(i) - softplus(eta(i));
  return ll / static_cast<double>(eta.size());
}

}  // namespace

double LinearModel::predict(std::span<const double> x) const {
  return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())).dot(coefficients);
}

double LogisticModel::linear_predictor(std::span<const double> x) const {
  return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())).dot(coefficients);
}

double LogisticModel::probability(std::span<const double> x) const { return expit(linear_predictor(x)); }

LinearModel fit_linear(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  check_design(X, y);
  const Standardizer st(X);
  const Eigen::MatrixXd Z = st.apply(X);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z.rows(), Z.cols());
  qr.setThreshold(kRankThreshold);
  qr.compute(Z);
  const Eigen::VectorXd gamma = qr.solve(y);

  LinearModel model;
  model.coefficients = st.to_original(gamma);
  model.dropped_columns = dropped_from(qr, st);
  model.rank = static_cast<int>(Z.cols() - static_cast<Eigen::Index>(model.dropped_columns.size()));
  warn_dropped("fit_linear", model.dropped_columns);

  const Eigen::VectorXd residual = y - Z * gamma;
  const double dof = static_cast<double>(X.rows() - model.rank);
  model.residual_sd = dof > 0 ? std::sqrt(residual.squaredNorm() / dof) : 0.0;
  model.range_min = y.minCoeff();
  model.range_max = y.maxCoeff();
  return model;
}

LogisticModel fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, LogisticFitOptions options) {
  check_design(X, y);
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y(i) != 0.0 && y(i) != 1.0) throw std::domain_error("fit_logistic: response must be 0/1");

  const Standardizer st(X);
  const Eigen::MatrixXd Z = st.apply(X);
  const auto n = static_cast<double>(Z.rows());

  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(Z.cols());
  if (st.intercept >= 0) {
    const double ybar = std::clamp(y.mean(), 1e-6, 1.0 - 1e-6);
    gamma(st.intercept) = logit(ybar);
  }
  Eigen::VectorXd eta = Z * gamma;
  double ll = mean_log_likelihood(eta, y);

  LogisticModel model;
  model.log_likelihood_trace.push_back(ll * n);
  std::vector<int> dropped = st.constant_columns();

  auto finish = [&](int iterations, double grad_norm) {
    model.coefficients = st.to_original(gamma);
    model.iterations = iterations;
    model.gradient_norm = grad_norm;
    model.log_likelihood = ll * n;
    model.dropped_columns = dropped;
    model.separation = model.separation || eta.cwiseAbs().maxCoeff() > kSeparationThreshold;
  };

  Eigen::VectorXd p(Z.rows()), w(Z.rows());
  bool converged = false;
  double grad_norm = INFINITY;
  int iter = 0;
  for (; iter <= options.max_iter; ++iter) {
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      p(i) = expit(eta(i));
      w(i) = p(i) * (1.0 - p(i));
    }
    const Eigen::VectorXd grad = Z.transpose() * (y - p) / n;
    grad_norm = grad.cwiseAbs().maxCoeff();
    if (converged || iter == options.max_iter) break;
    if (grad_norm <= options.tol) converged = true;  // one more polishing step, then stop

    const Eigen::MatrixXd H = Z.transpose() * w.asDiagonal() * Z / n;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(H.rows(), H.cols());
    qr.setThreshold(kRankThreshold);
    qr.compute(H);
    const Eigen::VectorXd step = qr.solve(grad);
    dropped = dropped_from(qr, st);

    double t = 1.0;
    Eigen::VectorXd next = gamma + step;
    Eigen::VectorXd next_eta = Z * next;
    double next_ll = mean_log_likelihood(next_eta, y);
    while (!(next_ll >= ll) && t > 1e-10) {
      t *= 0.5;
      next = gamma + t * step;
      next_eta = Z * next;
      next_ll = mean_log_likelihood(next_eta, y);
    }
    if (!(next_ll >= ll)) break;  // no ascent possible along the Newton direction

    const double change = next_ll - ll;
    gamma = std::move(next);
    eta = std::move(next_eta);
    ll = next_ll;
    model.log_likelihood_trace.push_back(ll * n);

    if (eta.cwiseAbs().maxCoeff() > kSeparationThreshold) {
      model.separation = true;
      if (change <= 1e-10 * (1.0 + std::abs(ll))) {
        ++iter;
        break;
      }
    }
  }

  finish(iter, grad_norm);
  warn_dropped("fit_logistic", dropped);
  if (model.separation && !converged) {
    log_warning("fit_logistic: quasi-separation detected; returning flagged estimate");
    return model;
  }
  if (!converged && grad_norm > options.tol) {
    throw LogisticConvergenceError("fit_logistic: no convergence after " + std::to_string(iter) +
                                       " iterations (gradient " + std::to_string(grad_norm) + ")",
                                   model);
  }
  return model;
}

}  // namespace gnice
