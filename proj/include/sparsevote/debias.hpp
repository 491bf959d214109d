#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Sparse>

#include "sparsevote/core.hpp"
#include "sparsevote/datagen.hpp"
#include "sparsevote/lasso.hpp"

namespace sparsevote {

using SparseRows = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Normalization of the nodewise residual term in tau_i^2.
///   paper_2n:     tau_i^2 = ||x_i - X_{-i} gamma_i||^2 / (2n) + lambda ||gamma_i||_1
///   literature_n: tau_i^2 = ||x_i - X_{-i} gamma_i||^2 / n    + lambda ||gamma_i||_1
/// Only literature_n makes diag(Omega_hat Sigma_hat) equal to one, which is
/// what removes the lasso bias; paper_2n inflates Omega_hat by up to 2x.
enum class NodewiseScale { paper_2n, literature_n };

struct PrecisionEstimate {
  SparseRows omega_hat;  // d x d, row i = tau_i^{-2} (row i of C)
  Vector tau_sq;
  double lambda_omega = 0.0;
  NodewiseScale scale = NodewiseScale::literature_n;
  int nonconverged = 0;  // nodewise fits that hit the sweep cap

  Eigen::Index dim() const { return omega_hat.rows(); }

  /// gamma_i as a length-(d-1) vector (column i removed).
  Vector gamma_row(Eigen::Index i) const {
    const Eigen::Index d = dim();
    Vector g = Vector::Zero(d - 1);
    for (SparseRows::InnerIterator it(omega_hat, i); it; ++it) {
      const auto j = it.col();
      if (j == i) continue;
      g[j < i ? j : j - 1] = -it.value() * tau_sq[i];
    }
    return g;
  }

  Matrix dense() const { return Matrix(omega_hat); }
};

/// Sigma_hat = X^T X / n, exactly symmetric.
inline Matrix empirical_covariance(const Eigen::Ref<const Matrix>& X) {
  require(X.rows() >= 1, "empirical_covariance: need at least one row");
  const Eigen::Index d = X.cols();
  Matrix S = Matrix::Zero(d, d);
  S.selfadjointView<Eigen::Lower>().rankUpdate(X.transpose(), 1.0 / static_cast<double>(X.rows()));
  S.triangularView<Eigen::StrictlyUpper>() = S.transpose();
  return S;
}

/// Nodewise-lasso precision matrix from a covariance (Gram) matrix.
/// Each column i is regressed on the others at lambda_omega; the residual
/// norm comes from Sigma_hat directly, so X is not needed here.
inline PrecisionEstimate estimate_precision_from_cov(const Eigen::Ref<const Matrix>& sigma_hat,
                                                     double lambda_omega,
                                                     NodewiseScale scale = NodewiseScale::literature_n,
                                                     const LassoOptions& opts = {}) {
  require(lambda_omega > 0.0, "estimate_precision: lambda_omega must be positive");
  const Eigen::Index d = sigma_hat.rows();
  require(d >= 2 && sigma_hat.cols() == d, "estimate_precision: need a square matrix with d >= 2");

  PrecisionEstimate est;
  est.lambda_omega = lambda_omega;
  est.scale = scale;
  est.tau_sq.resize(d);
  std::vector<Eigen::Triplet<double>> entries;
  const double resid_factor = scale == NodewiseScale::paper_2n ? 0.5 : 1.0;

  for (Eigen::Index i = 0; i < d; ++i) {
    const LassoFit fit = fit_lasso_gram(sigma_hat, sigma_hat.col(i), lambda_omega, std::nullopt, opts, i);
    if (!fit.converged) ++est.nonconverged;
    const Vector& gamma = fit.coefficients;

    // ||x_i - X gamma||^2 / n = S_ii - 2 gamma^T S_{:,i} + gamma^T S gamma
    std::vector<Eigen::Index> nz;
    for (Eigen::Index j = 0; j < d; ++j)
      if (gamma[j] != 0.0) nz.push_back(j);
    double quad = 0.0;
    double cross = 0.0;
    double l1 = 0.0;
    for (auto j : nz) {
      cross += gamma[j] * sigma_hat(j, i);
      l1 += std::abs(gamma[j]);
      for (auto k : nz) quad += gamma[j] * sigma_hat(j, k) * gamma[k];
    }
    const double resid_sq = std::max(sigma_hat(i, i) - 2.0 * cross + quad, 0.0);
    const double tau_sq = resid_factor * resid_sq + lambda_omega * l1;
    if (!(tau_sq > std::numeric_limits<double>::epsilon())) throw Error("degenerate nodewise residual");
    est.tau_sq[i] = tau_sq;

    entries.emplace_back(i, i, 1.0 / tau_sq);
    for (auto j : nz) entries.emplace_back(i, j, -gamma[j] / tau_sq);
  }
  est.omega_hat.resize(d, d);
  est.omega_hat.setFromTriplets(entries.begin(), entries.end());
  est.omega_hat.makeCompressed();
  return est;
}

inline PrecisionEstimate estimate_precision(const Eigen::Ref<const Matrix>& X, double lambda_omega,
                                            NodewiseScale scale = NodewiseScale::literature_n,
                                            const LassoOptions& opts = {}) {
  return estimate_precision_from_cov(empirical_covariance(X), lambda_omega, scale, opts);
}

/// diag(Omega Sigma Omega^T), using the sparsity of Omega's rows.
inline Vector sandwich_diagonal(const SparseRows& omega, const Eigen::Ref<const Matrix>& sigma_hat) {
  const Eigen::Index d = omega.rows();
  Vector c(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    double acc = 0.0;
    for (SparseRows::InnerIterator a(omega, k); a; ++a)
      for (SparseRows::InnerIterator b(omega, k); b; ++b) acc += a.value() * sigma_hat(a.col(), b.col()) * b.value();
    c[k] = acc;
  }
  return c;
}

inline Vector sandwich_diagonal(const Eigen::Ref<const Matrix>& omega, const Eigen::Ref<const Matrix>& sigma_hat) {
  return (omega * sigma_hat).cwiseProduct(omega).rowwise().sum();
}

/// Same diagonal computed as ||X omega_k||^2 / n, without forming Sigma_hat.
inline Vector sandwich_diagonal_from_design(const SparseRows& omega, const Eigen::Ref<const Matrix>& X) {
  const Eigen::Index d = omega.rows();
  const double inv_n = 1.0 / static_cast<double>(X.rows());
  Vector c(d);
  Vector v(X.rows());
  for (Eigen::Index k = 0; k < d; ++k) {
    v.setZero();
    for (SparseRows::InnerIterator a(omega, k); a; ++a) v.noalias() += a.value() * X.col(a.col());
    c[k] = v.squaredNorm() * inv_n;
  }
  return c;
}

/// theta_hat = theta_tilde + Omega X^T (y - X theta_tilde) / n
template <typename OmegaT>
Vector debias(const Eigen::Ref<const Matrix>& X, const Eigen::Ref<const Vector>& y,
              const Eigen::Ref<const Vector>& theta_tilde, const OmegaT& omega) {
  require(X.rows() == y.size() && X.cols() == theta_tilde.size(), "debias: shape mismatch");
  require(omega.rows() == X.cols() && omega.cols() == X.cols(), "debias: omega has wrong shape");
  const Vector score = X.transpose() * (y - X * theta_tilde) / static_cast<double>(X.rows());
  return theta_tilde + omega * score;
}

/// xi_k = sqrt(n) theta_hat_k / (sigma sqrt(c_kk)).
inline Vector standardize(const Eigen::Ref<const Vector>& theta_hat, const Eigen::Ref<const Vector>& c_diag,
                          double sigma, double n) {
  require(sigma > 0.0, "standardize: sigma must be positive");
  require(theta_hat.size() == c_diag.size(), "standardize: length mismatch");
  if (!(c_diag.array() > 0.0).all()) throw Error("invalid sandwich variance");
  return (std::sqrt(n) * theta_hat.array() / (sigma * c_diag.array().sqrt())).matrix();
}

struct Standardized {
  Vector xi_hat;
  Vector c_diag;
};

template <typename OmegaT>
Standardized standardize(const Eigen::Ref<const Vector>& theta_hat, const OmegaT& omega,
                         const Eigen::Ref<const Matrix>& sigma_hat, double sigma, double n) {
  Standardized out;
  out.c_diag = sandwich_diagonal(omega, sigma_hat);
  out.xi_hat = standardize(theta_hat, out.c_diag, sigma, n);
  return out;
}

struct LocalFitParams {
  double lambda = 0.0;
  double lambda_omega = 0.0;
  double sigma = 1.0;
  NodewiseScale scale = NodewiseScale::literature_n;
  LassoOptions lasso;
  bool store_sigma_hat = false;
};

struct LocalFit {
  std::uint32_t machine_id = 0;
  Vector theta_tilde;
  Vector theta_hat;
  Vector sigma_hat_sq_diag;  // c_kk
  Vector xi_hat;
  std::optional<Matrix> sigma_hat_emp;
  bool lasso_converged = true;
  int lasso_iterations = 0;
};

/// Lasso, debiasing and standardization for one machine when the precision
/// estimate and its sandwich diagonal are already known (fixed design).
inline LocalFit local_fit_with(std::uint32_t machine_id, const Eigen::Ref<const Matrix>& X,
                               const Eigen::Ref<const Vector>& y, const PrecisionEstimate& precision,
                               const Eigen::Ref<const Vector>& c_diag, const LocalFitParams& params) {
  LocalFit out;
  out.machine_id = machine_id;
  LassoFit lasso = fit_lasso(X, y, params.lambda, std::nullopt, params.lasso);
  out.lasso_converged = lasso.converged;
  out.lasso_iterations = lasso.iterations;
  out.theta_tilde = std::move(lasso.coefficients);
  out.theta_hat = debias(X, y, out.theta_tilde, precision.omega_hat);
  out.sigma_hat_sq_diag = c_diag;
  out.xi_hat = standardize(out.theta_hat, out.sigma_hat_sq_diag, params.sigma, static_cast<double>(X.rows()));
  return out;
}

/// Full per-machine pipeline. With `precomputed` the nodewise regressions are
/// skipped and the supplied precision matrix is used as is.
inline LocalFit local_fit(const DataShard& shard, const LocalFitParams& params,
                          const PrecisionEstimate* precomputed = nullptr) {
  require(shard.X.rows() == shard.y.size(), "local_fit: X and y row counts differ");
  Matrix sigma_hat = empirical_covariance(shard.X);
  std::optional<PrecisionEstimate> own;
  if (!precomputed) own = estimate_precision_from_cov(sigma_hat, params.lambda_omega, params.scale, params.lasso);
  const PrecisionEstimate& precision = precomputed ? *precomputed : *own;
  require(precision.dim() == shard.X.cols(), "local_fit: precision has wrong dimension");

  const Vector c_diag = sandwich_diagonal(precision.omega_hat, sigma_hat);
  LocalFit out = local_fit_with(shard.machine_id, shard.X, shard.y, precision, c_diag, params);
  if (params.store_sigma_hat) out.sigma_hat_emp = std::move(sigma_hat);
  return out;
}

inline double compute_c_omega(std::span<const LocalFit> fits) {
  require(!fits.empty(), "no machines");
  std::vector<Vector> diags;
  diags.reserve(fits.size());
  for (const auto& f : fits) diags.push_back(f.sigma_hat_sq_diag);
  return compute_c_omega(std::span<const Vector>(diags));
}

}  // namespace sparsevote
