#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <utility>

#include "sparsevote/core.hpp"

namespace sparsevote::theory {

/// Constants the debiased-lasso error bound depends on. Their true values
/// are not known in closed form; the defaults are illustrative (K_omega = 2
/// is the off-diagonal row sparsity of the AR(1) precision matrix).
struct TheoryConstants {
  double C_bias = 1.0;
  double rho = 1.0;
  double K_omega = 2.0;
  double c_star = 0.25;
  double c_small = 0.25;
  double kappa = 8.0;
  double kappa_omega = 2.0;
  bool illustrative = true;

  void validate() const {
    require(C_bias > 0 && rho > 0 && K_omega > 0 && c_star > 0 && c_small > 0 && kappa > 0 && kappa_omega > 0,
            "TheoryConstants: all constants must be positive");
  }
};

struct RegimeReport {
  double snr_floor = 0.0;
  double m_lower = 0.0;
  double m_upper = 0.0;
  bool feasible = false;
  double epsilon_tau = 0.0;
  double delta_R = 0.0;
  // Separate from `feasible`: the epsilon requirement of the theorem
  // (eps <= 1/d for the large-M regime, eps < 1/(4 d^r) for the small-M one).
  bool epsilon_condition = false;
};

inline double normal_pdf(double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi); }

/// 1 - Phi(t)
inline double normal_sf(double t) { return 0.5 * std::erfc(t / std::numbers::sqrt2); }

/// (t e^{-t^2/2} / (sqrt(2 pi)(t^2 + 1)),  e^{-t^2/2} / (sqrt(2 pi) t))
inline std::pair<double, double> gaussian_tail_bounds(double t) {
  if (!(t > 0.0)) throw Error("gaussian_tail_bounds: t must be positive");
  const double phi = normal_pdf(t);
  return {t * phi / (t * t + 1.0), phi / t};
}

/// F(a, p) = a ln(p/a) + (1 - a) ln((1 - p)/(1 - a))
inline double binomial_rate(double a, double p) {
  return a * std::log(p / a) + (1.0 - a) * std::log((1.0 - p) / (1.0 - a));
}

/// Upper bound e^{M F(a,p)} on Pr(Bin(M, p) > M a), valid for 0 < p <= a < 1.
inline double binomial_tail_bound(int M, double p, double a) {
  require(M >= 1, "binomial_tail_bound: M must be positive");
  require(p > 0.0 && a < 1.0, "binomial_tail_bound: need 0 < p and a < 1");
  if (a < p) throw Error("bound requires a >= p");
  if (a == p) return 1.0;
  return std::exp(M * binomial_rate(a, p));
}

/// delta_R = C sigma (ln d / sqrt n) (rho sqrt K + min{K, K_omega})
inline double delta_R_bound(const TheoryConstants& c, double sigma, double d, double n, double K) {
  c.validate();
  require(sigma > 0 && d > 1 && n > 0 && K > 0, "delta_R_bound: inputs must be positive");
  return c.C_bias * sigma * (std::log(d) / std::sqrt(n)) * (c.rho * std::sqrt(K) + std::min(K, c.K_omega));
}

/// Tail terms of the Gaussian-approximation error that do not depend on k, m.
inline double epsilon_tail_terms(const TheoryConstants& c, double d, double n, double K) {
  return 2.0 * d * std::exp(-c.c_star * n / K) + d * std::exp(-c.c_small * n) + 6.0 / (d * d);
}

/// Largest Gaussian-approximation error over all (coordinate, machine)
/// pairs; `sandwich_diag` and `vartheta` are parallel arrays with one entry
/// per pair.
inline double epsilon_tau(const TheoryConstants& c, double sigma, double d, double n, double K, double tau,
                          std::span<const double> sandwich_diag, std::span<const double> vartheta) {
  require(sandwich_diag.size() == vartheta.size() && !sandwich_diag.empty(),
          "epsilon_tau: need matching nonempty diag and vartheta arrays");
  const double dR = delta_R_bound(c, sigma, d, n, K);
  double worst = 0.0;
  for (std::size_t i = 0; i < sandwich_diag.size(); ++i) {
    require(sandwich_diag[i] > 0.0, "epsilon_tau: sandwich diagonal must be positive");
    worst = std::max(worst, dR * normal_pdf(tau - vartheta[i]) / (sigma * std::sqrt(sandwich_diag[i])));
  }
  return worst + epsilon_tail_terms(c, d, n, K);
}

/// Same bound with delta_R supplied directly.
inline double epsilon_tau_from_delta(double delta_R, double sigma, double tau, double tail_terms,
                                     std::span<const double> sandwich_diag, std::span<const double> vartheta) {
  double worst = 0.0;
  for (std::size_t i = 0; i < sandwich_diag.size(); ++i)
    worst = std::max(worst, delta_R * normal_pdf(tau - vartheta[i]) / (sigma * std::sqrt(sandwich_diag[i])));
  return worst + tail_terms;
}

/// Normalized signal sqrt(n) theta_k / (sigma sqrt(c_kk)).
inline double vartheta(double theta_k, double n, double sigma, double sandwich_diag_kk) {
  require(sigma > 0.0 && sandwich_diag_kk > 0.0, "vartheta: sigma and diagonal must be positive");
  return std::sqrt(n) * theta_k / (sigma * std::sqrt(sandwich_diag_kk));
}

/// C(r, d) = sqrt(2 (1 - sqrt r)^2 ln d) / (sqrt(2 pi) (2 (1 - sqrt r)^2 ln d + 1)),
/// the Gaussian-tail lower-bound constant: Phi^c(t) >= C(r,d) d^{-(1-sqrt r)^2}.
inline double thm2_constant(double r, double d) {
  const double g = (1.0 - std::sqrt(r)) * (1.0 - std::sqrt(r));
  const double u = 2.0 * g * std::log(d);
  return std::sqrt(u) / (std::sqrt(2.0 * std::numbers::pi) * (u + 1.0));
}

inline double thm2_snr_floor(double d) {
  const double ld = std::log(d);
  const double inner = std::log(48.0 * std::sqrt(std::numbers::pi) * std::pow(ld, 1.5));
  return 0.25 * inner * inner / (ld * ld);
}

inline double thm3_snr_floor(double d) {
  const double ld = std::log(d);
  return std::log(16.0 * ld) / ld;
}

/// Machine-count window for thresholding at tau = sqrt(2 ln d).
inline RegimeReport thm2_regime(double d, double r, double eps) {
  require(d >= 2 && r > 0 && r < 1 && eps >= 0, "thm2_regime: need d >= 2, 0 < r < 1, eps >= 0");
  RegimeReport rep;
  rep.epsilon_tau = eps;
  rep.snr_floor = thm2_snr_floor(d);
  const double g = (1.0 - std::sqrt(r)) * (1.0 - std::sqrt(r));
  const double scale = std::pow(d, g);
  const double denom = thm2_constant(r, d) - eps * scale;
  rep.m_lower = denom > 0.0 ? 8.0 * std::log(d) * scale / denom : std::numeric_limits<double>::infinity();
  rep.m_upper = d / 3.0;
  rep.feasible = denom > 0.0 && rep.m_lower <= rep.m_upper && r > rep.snr_floor;
  rep.epsilon_condition = eps <= 1.0 / d;
  return rep;
}

/// Machine-count window for thresholding at tau = sqrt(2 r ln d).
inline RegimeReport thm3_regime(double d, double r, double eps) {
  require(d >= 2 && r > 0 && r < 1 && eps >= 0, "thm3_regime: need d >= 2, 0 < r < 1, eps >= 0");
  RegimeReport rep;
  rep.epsilon_tau = eps;
  rep.snr_floor = thm3_snr_floor(d);
  rep.m_lower = 2.0 * eps < 1.0 ? 16.0 * std::log(d) / (1.0 - 2.0 * eps) : std::numeric_limits<double>::infinity();
  rep.m_upper = std::pow(d, r);
  rep.epsilon_condition = eps < 1.0 / (4.0 * std::pow(d, r));
  rep.feasible = rep.epsilon_condition && r > rep.snr_floor && rep.m_lower <= rep.m_upper;
  return rep;
}

/// Support indices are each sent with probability >= p_min >= 8 ln d / M.
inline bool support_vote_condition(double p_min, int M, double d) { return p_min >= 8.0 * std::log(d) / M; }

/// Non-support indices are each sent with probability <= 1/M.
inline bool nonsupport_vote_condition(double p_max, int M) { return p_max <= 1.0 / M; }

}  // namespace sparsevote::theory
