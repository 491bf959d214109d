#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/QR>

#include "sparsevote/core.hpp"

namespace sparsevote {

inline double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

struct LassoOptions {
  double kkt_tol = 1e-7;
  double coef_tol = 1e-9;
  int max_sweeps = 100000;
};

struct LassoFit {
  Vector coefficients;
  double lambda = 0.0;
  int iterations = 0;  // coordinate sweeps, full or active-set
  double max_kkt_violation = 0.0;
  bool converged = false;
};

namespace detail {

// Residual of the subgradient condition for one coordinate, given the
// correlation g_j = x_j^T (y - X theta) / n.
inline double kkt_residual(double grad, double coef, double lambda) {
  if (coef > 0.0) return std::abs(grad - lambda);
  if (coef < 0.0) return std::abs(grad + lambda);
  return std::max(std::abs(grad) - lambda, 0.0);
}

}  // namespace detail

/// (1/2n) ||y - X theta||^2 + lambda ||theta||_1
inline double lasso_objective(const Eigen::Ref<const Matrix>& X, const Eigen::Ref<const Vector>& y,
                              double lambda, const Eigen::Ref<const Vector>& theta) {
  const double n = static_cast<double>(X.rows());
  return (y - X * theta).squaredNorm() / (2.0 * n) + lambda * theta.lpNorm<1>();
}

inline double kkt_violation(const Eigen::Ref<const Matrix>& X, const Eigen::Ref<const Vector>& y,
                            double lambda, const Eigen::Ref<const Vector>& theta) {
  require(X.rows() == y.size() && X.cols() == theta.size(), "kkt_violation: shape mismatch");
  const Vector grad = X.transpose() * (y - X * theta) / static_cast<double>(X.rows());
  double worst = 0.0;
  for (Eigen::Index j = 0; j < grad.size(); ++j)
    worst = std::max(worst, detail::kkt_residual(grad[j], theta[j], lambda));
  return worst;
}

/// Cyclic coordinate descent on (1/2n)||y - X theta||^2 + lambda ||theta||_1.
/// Keeps the residual y - X theta up to date instead of forming X^T X; full
/// sweeps alternate with sweeps restricted to the active set until a full
/// sweep moves no coefficient by more than coef_tol and the KKT residual is
/// below kkt_tol. A non-converged fit is returned with converged = false.
inline LassoFit fit_lasso(const Eigen::Ref<const Matrix>& X, const Eigen::Ref<const Vector>& y,
                          double lambda, const std::optional<Vector>& warm_start = std::nullopt,
                          const LassoOptions& opts = {}) {
  require(lambda > 0.0, "fit_lasso: lambda must be positive");
  require(X.rows() == y.size(), "fit_lasso: X and y row counts differ");
  require(all_finite(X) && all_finite(y), "fit_lasso: non-finite input");
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  const double inv_n = 1.0 / static_cast<double>(n);

  Vector theta = Vector::Zero(d);
  if (warm_start) {
    require(warm_start->size() == d, "fit_lasso: warm start has wrong length");
    theta = *warm_start;
  }
  Vector col_sq(d);
  for (Eigen::Index j = 0; j < d; ++j) col_sq[j] = X.col(j).squaredNorm() * inv_n;
  for (Eigen::Index j = 0; j < d; ++j)
    if (col_sq[j] == 0.0) theta[j] = 0.0;

  Vector resid = y - X * theta;
  auto update = [&](Eigen::Index j) -> double {
    if (col_sq[j] == 0.0) return 0.0;
    const double z = X.col(j).dot(resid) * inv_n + col_sq[j] * theta[j];
    const double next = soft_threshold(z, lambda) / col_sq[j];
    const double delta = next - theta[j];
    if (delta != 0.0) {
      resid.noalias() -= delta * X.col(j);
      theta[j] = next;
    }
    return std::abs(delta);
  };
  auto violation = [&]() {
    const Vector grad = X.transpose() * resid * inv_n;
    double worst = 0.0;
    for (Eigen::Index j = 0; j < d; ++j)
      worst = std::max(worst, detail::kkt_residual(grad[j], theta[j], lambda));
    return worst;
  };

  LassoFit fit;
  fit.lambda = lambda;
  std::vector<Eigen::Index> active;
  while (fit.iterations < opts.max_sweeps) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) max_change = std::max(max_change, update(j));
    ++fit.iterations;
    if (max_change < opts.coef_tol) {
      resid = y - X * theta;
      if (violation() <= opts.kkt_tol) {
        fit.converged = true;
        break;
      }
    }
    active.clear();
    for (Eigen::Index j = 0; j < d; ++j)
      if (theta[j] != 0.0) active.push_back(j);
    while (!active.empty() && fit.iterations < opts.max_sweeps) {
      double change = 0.0;
      for (auto j : active) change = std::max(change, update(j));
      ++fit.iterations;
      if (change < opts.coef_tol) break;
    }
  }
  resid = y - X * theta;
  fit.max_kkt_violation = violation();
  fit.converged = fit.converged && fit.max_kkt_violation <= opts.kkt_tol;
  fit.coefficients = std::move(theta);
  return fit;
}

/// Same problem in covariance form: minimize
///   (1/2) theta^T G theta - b^T theta + lambda ||theta||_1
/// where G = X^T X / n and b = X^T y / n. Coordinate `exclude` (if >= 0) is
/// pinned at zero and left out of the KKT check, which is exactly the
/// nodewise regression of column `exclude` on the others when b = G.col(exclude).
inline LassoFit fit_lasso_gram(const Eigen::Ref<const Matrix>& G, const Eigen::Ref<const Vector>& b,
                               double lambda, const std::optional<Vector>& warm_start = std::nullopt,
                               const LassoOptions& opts = {}, Eigen::Index exclude = -1) {
  require(lambda > 0.0, "fit_lasso_gram: lambda must be positive");
  require(G.rows() == G.cols() && G.rows() == b.size(), "fit_lasso_gram: shape mismatch");
  const Eigen::Index d = G.rows();

  Vector theta = Vector::Zero(d);
  if (warm_start) {
    require(warm_start->size() == d, "fit_lasso_gram: warm start has wrong length");
    theta = *warm_start;
  }
  for (Eigen::Index j = 0; j < d; ++j)
    if (G(j, j) <= 0.0 || j == exclude) theta[j] = 0.0;

  auto rebuild = [&]() {
    Vector q = Vector::Zero(d);
    for (Eigen::Index j = 0; j < d; ++j)
      if (theta[j] != 0.0) q.noalias() += theta[j] * G.col(j);
    return q;
  };
  Vector q = rebuild();  // G theta

  auto update = [&](Eigen::Index j) -> double {
    if (j == exclude || G(j, j) <= 0.0) return 0.0;
    const double z = b[j] - q[j] + G(j, j) * theta[j];
    const double next = soft_threshold(z, lambda) / G(j, j);
    const double delta = next - theta[j];
    if (delta != 0.0) {
      q.noalias() += delta * G.col(j);
      theta[j] = next;
    }
    return std::abs(delta);
  };
  auto violation = [&]() {
    double worst = 0.0;
    for (Eigen::Index j = 0; j < d; ++j)
      if (j != exclude) worst = std::max(worst, detail::kkt_residual(b[j] - q[j], theta[j], lambda));
    return worst;
  };

  LassoFit fit;
  fit.lambda = lambda;
  std::vector<Eigen::Index> active;
  while (fit.iterations < opts.max_sweeps) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) max_change = std::max(max_change, update(j));
    ++fit.iterations;
    if (max_change < opts.coef_tol) {
      q = rebuild();
      if (violation() <= opts.kkt_tol) {
        fit.converged = true;
        break;
      }
    }
    active.clear();
    for (Eigen::Index j = 0; j < d; ++j)
      if (theta[j] != 0.0) active.push_back(j);
    while (!active.empty() && fit.iterations < opts.max_sweeps) {
      double change = 0.0;
      for (auto j : active) change = std::max(change, update(j));
      ++fit.iterations;
      if (change < opts.coef_tol) break;
    }
  }
  q = rebuild();
  fit.max_kkt_violation = violation();
  fit.converged = fit.converged && fit.max_kkt_violation <= opts.kkt_tol;
  fit.coefficients = std::move(theta);
  return fit;
}

/// Least squares on the selected columns via column-pivoted QR.
inline Vector restricted_ols(const Eigen::Ref<const Matrix>& X_S, const Eigen::Ref<const Vector>& y) {
  require(X_S.rows() == y.size(), "restricted_ols: row mismatch");
  require(X_S.cols() >= 1, "restricted_ols: empty support");
  if (X_S.rows() < X_S.cols()) throw Error("restricted design not full rank");
  Eigen::ColPivHouseholderQR<Matrix> qr(X_S);
  if (qr.rank() < X_S.cols()) throw Error("restricted design not full rank");
  return qr.solve(y);
}

}  // namespace sparsevote
