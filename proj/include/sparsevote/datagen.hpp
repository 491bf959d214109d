#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "sparsevote/core.hpp"
#include "sparsevote/rng.hpp"

namespace sparsevote {

/// Generative configuration of the distributed sparse regression model
/// y = X theta* + w, with AR(1)-correlated Gaussian design rows.
struct ProblemSpec {
  int d = 1000;
  int K = 5;
  int M = 100;
  int n = 200;
  double r = 0.5;
  double corr_decay = 0.5;
  // Empty means "from_r": sigma = 1 / sqrt(r).
  std::optional<double> sigma;
  std::uint64_t base_seed = 1;

  double noise_sigma() const { return sigma ? *sigma : 1.0 / std::sqrt(r); }

  void validate() const {
    require(d >= 2, "ProblemSpec: d must be at least 2");
    require(K >= 1 && K < d, "ProblemSpec: need 1 <= K < d");
    require(n >= 1, "ProblemSpec: n must be positive");
    require(M >= 1, "ProblemSpec: M must be positive");
    require(r > 0.0 && r <= 1.0, "ProblemSpec: r must lie in (0, 1]");
    require(corr_decay >= 0.0 && corr_decay < 1.0, "ProblemSpec: corr_decay must lie in [0, 1)");
    require(!sigma || *sigma > 0.0, "ProblemSpec: sigma must be positive");
  }
};

struct DataShard {
  std::uint32_t machine_id = 0;
  Matrix X;  // n x d
  Vector y;  // n

  Eigen::Index rows() const { return X.rows(); }
  Eigen::Index dim() const { return X.cols(); }
};

struct GroundTruth {
  Vector theta_star;
  Support support;
  double theta_min = 0.0;
  double c_omega = 0.0;
};

/// Lower Cholesky factor of Sigma_ij = rho^|i-j|. Row i is
/// (rho^i, rho^(i-1) s, ..., rho s, s) with s = sqrt(1 - rho^2); the inverse
/// factor is bidiagonal, which is what sample_design exploits.
inline Matrix ar1_cholesky(int d, double rho) {
  require(d >= 1, "ar1_cholesky: d must be positive");
  require(rho >= 0.0 && rho < 1.0, "ar1_cholesky: rho must lie in [0, 1)");
  const double s = std::sqrt(1.0 - rho * rho);
  Matrix L = Matrix::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    L(i, 0) = std::pow(rho, i);
    for (int j = 1; j <= i; ++j) L(i, j) = std::pow(rho, i - j) * s;
  }
  return L;
}

inline Matrix ar1_covariance(int d, double rho) {
  Matrix S(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) S(i, j) = std::pow(rho, std::abs(i - j));
  return S;
}

/// n rows i.i.d. N(0, Sigma) with AR(1) Sigma, drawn by the recursion
/// x_0 = z_0, x_j = rho x_{j-1} + sqrt(1 - rho^2) z_j.
inline Matrix sample_design(int n, int d, double rho, GaussianStream& gen) {
  const double s = std::sqrt(1.0 - rho * rho);
  Matrix X(n, d);
  for (int i = 0; i < n; ++i) {
    double prev = gen();
    X(i, 0) = prev;
    for (int j = 1; j < d; ++j) {
      prev = rho * prev + s * gen();
      X(i, j) = prev;
    }
  }
  return X;
}

/// Hook for non-AR(1) designs: rows z^T L^T with z ~ N(0, I).
inline Matrix sample_design(int n, const Eigen::Ref<const Matrix>& chol_lower, GaussianStream& gen) {
  const auto d = chol_lower.rows();
  Matrix Z(n, d);
  for (int i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) Z(i, j) = gen();
  return Z * chol_lower.transpose();
}

/// Designs for `machines` machines with `rows` rows each (defaults: spec.M,
/// spec.n). Responses are left zero; see sample_responses. `design_round`
/// separates independent redraws of the whole design set.
inline std::vector<DataShard> sample_shards(const ProblemSpec& spec, std::optional<int> rows = {},
                                            std::optional<int> machines = {},
                                            std::uint64_t design_round = 0) {
  spec.validate();
  const int n = rows.value_or(spec.n);
  const int M = machines.value_or(spec.M);
  std::vector<DataShard> shards(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m) {
    GaussianStream gen(derive_seed(spec.base_seed, StreamTag::design, static_cast<std::uint64_t>(m),
                                   design_round));
    auto& sh = shards[static_cast<std::size_t>(m)];
    sh.machine_id = static_cast<std::uint32_t>(m);
    sh.X = sample_design(n, spec.d, spec.corr_decay, gen);
    sh.y = Vector::Zero(n);
  }
  return shards;
}

inline double theta_min_from_snr(double d, double sigma, double r, double n, double c_omega) {
  require(d >= 2 && sigma > 0 && r >= 0 && n > 0 && c_omega > 0,
          "theta_min_from_snr: arguments must be positive and d >= 2");
  return sigma * std::sqrt(2.0 * (c_omega / n) * r * std::log(d));
}

/// K-sparse theta*: support uniform without replacement, magnitudes the K
/// equally spaced values in [theta_min, 2 theta_min] in shuffled order,
/// independent fair signs. c_omega is left for the caller.
inline GroundTruth make_theta_star(const ProblemSpec& spec, double theta_min, std::uint64_t seed) {
  spec.validate();
  require(theta_min > 0.0, "make_theta_star: theta_min must be positive");
  std::mt19937_64 eng(seed);

  std::vector<std::uint32_t> idx(static_cast<std::size_t>(spec.d));
  std::iota(idx.begin(), idx.end(), 0u);
  // Partial Fisher-Yates for the first K slots.
  for (int k = 0; k < spec.K; ++k) {
    std::uniform_int_distribution<int> pick(k, spec.d - 1);
    std::swap(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(pick(eng))]);
  }
  Support support(idx.begin(), idx.begin() + spec.K);

  std::vector<double> mags(static_cast<std::size_t>(spec.K));
  for (int j = 0; j < spec.K; ++j)
    mags[static_cast<std::size_t>(j)] =
        spec.K == 1 ? theta_min : theta_min * (1.0 + static_cast<double>(j) / (spec.K - 1));
  std::shuffle(mags.begin(), mags.end(), eng);

  std::bernoulli_distribution coin(0.5);
  GroundTruth gt;
  gt.theta_star = Vector::Zero(spec.d);
  for (int j = 0; j < spec.K; ++j)
    gt.theta_star[support[static_cast<std::size_t>(j)]] = (coin(eng) ? 1.0 : -1.0) * mags[static_cast<std::size_t>(j)];
  std::sort(support.begin(), support.end());
  gt.support = std::move(support);
  gt.theta_min = theta_min;
  return gt;
}

/// y = X theta* + sigma w on every shard; shard m draws from the stream
/// (base_seed, noise, rep, machine_id).
inline void sample_responses(std::span<DataShard> shards, const Eigen::Ref<const Vector>& theta_star,
                             double sigma, std::uint64_t base_seed, std::uint64_t rep = 0) {
  require(sigma > 0.0, "sample_responses: sigma must be positive");
  for (auto& sh : shards) {
    require(sh.X.cols() == theta_star.size(), "sample_responses: theta_star length mismatch");
    GaussianStream gen(derive_seed(base_seed, StreamTag::noise, rep, sh.machine_id));
    Vector w(sh.X.rows());
    for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = gen();
    sh.y = sh.X * theta_star + sigma * w;
  }
}

/// Largest sandwich-variance diagonal over all coordinates and machines.
inline double compute_c_omega(std::span<const Vector> sandwich_diagonals) {
  require(!sandwich_diagonals.empty(), "no machines");
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& diag : sandwich_diagonals) best = std::max(best, diag.maxCoeff());
  return best;
}

}  // namespace sparsevote
