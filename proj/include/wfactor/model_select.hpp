#pragma once

// Generalized BIC for the projection dimension q of the weight-calibrated
// estimator.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "wfactor/errors.hpp"
#include "wfactor/factor_core.hpp"
#include "wfactor/tsstats.hpp"

namespace wfactor {

struct BicTerm {
  double bic = 0.0;
  double loss = 0.0;  // L_k(q): residual sum of squares divided by p n
  double dof = 0.0;   // (p + q) r - r (r + 1) / 2
  bool exact_fit = false;
};

struct BicTrace {
  std::vector<int> candidates;
  std::vector<int> r_hat_per_q;
  std::vector<std::vector<BicTerm>> per_lag_bic;  // [lag - 1][candidate]
  std::vector<double> totals;
  int q_hat = 0;
  int r_bar = 0;
  double C = 0.2;
  int q0 = 15;
};

inline double bic_degrees_of_freedom(Index p, int q, int r) {
  return static_cast<double>((p + q) * r) - 0.5 * static_cast<double>(r) * (r + 1);
}

inline double bic_value(Index p, Index n, double loss, double dof, double C) {
  const double pn = static_cast<double>(p) * static_cast<double>(n);
  return pn * std::log(loss) + C * dof * std::log(pn);
}

namespace detail {

inline BicTerm bic_term(LaggedRegression& reg, int k, const WeightMatrix& w, int r_hat, double C) {
  const Index p = reg.data().cols();
  const Index n = reg.data().rows();
  const RrrFit fit = reg.solve(k, w, r_hat);
  BicTerm term;
  term.loss = fit.objective / (static_cast<double>(p) * static_cast<double>(n));
  term.dof = bic_degrees_of_freedom(p, w.q, r_hat);
  if (!(term.loss > 0.0)) {
    term.exact_fit = true;
    term.bic = -std::numeric_limits<double>::infinity();
  } else {
    term.bic = bic_value(p, n, term.loss, term.dof, C);
  }
  return term;
}

inline void check_bic_config(const BicConfig& cfg, Index p, Index n) {
  if (!(cfg.C > 0.0)) fail(ErrorKind::InvalidConfig, "BIC penalty constant C must be positive");
  if (cfg.q0 < 3) fail(ErrorKind::InvalidConfig, "q0 must be at least 3");
  if (cfg.q0 > std::min(p, n) - 1) {
    fail(ErrorKind::InvalidConfig, "q0=" + std::to_string(cfg.q0) + " exceeds min(p, n) - 1 = " +
                                       std::to_string(std::min(p, n) - 1));
  }
}

inline double wauto_vartheta(const EstimatorConfig& cfg, Index p, Index n) {
  return cfg.vartheta_scale * static_cast<double>(p) / static_cast<double>(n);
}

// WAuto ratio estimate of r at projection dimension q.
inline RatioSelection wauto_ratio(LaggedRegression& reg, const WeightMatrix& w, int m, double vartheta) {
  std::vector<Vector> spectra;
  spectra.reserve(static_cast<std::size_t>(m));
  const Matrix half = w.half();
  for (int k = 1; k <= m; ++k) spectra.push_back(low_rank_spectrum(reg.lag(k) * half));
  return select_r(spectra, reg.data().rows(), vartheta, w.q - 1);
}

inline BicTrace select_q(LaggedRegression& reg, const BicConfig& cfg, const EstimatorConfig& est_cfg) {
  const Index p = reg.data().cols();
  const Index n = reg.data().rows();
  check_bic_config(cfg, p, n);
  if (est_cfg.m < 1 || est_cfg.m >= n) fail(ErrorKind::InvalidLag, "max lag m must satisfy 1 <= m < n");
  const double vartheta = wauto_vartheta(est_cfg, p, n);

  BicTrace trace;
  trace.C = cfg.C;
  trace.q0 = cfg.q0;
  trace.r_bar = wauto_ratio(reg, weight_matrix(reg.cov_eigen(), cfg.q0), est_cfg.m, vartheta).r_hat;
  // A supplied factor count replaces the per-q ratio estimate and must stay
  // below every candidate.
  const int lower = est_cfg.r_fixed ? std::max(trace.r_bar, *est_cfg.r_fixed) : trace.r_bar;
  for (int q = lower + 1; q <= cfg.q0; ++q) trace.candidates.push_back(q);
  if (trace.candidates.empty()) fail(ErrorKind::InvalidConfig, "no candidate q in (r_bar, q0]");

  trace.per_lag_bic.assign(static_cast<std::size_t>(est_cfg.m), {});
  std::optional<int> exact;
  for (int q : trace.candidates) {
    const WeightMatrix w = weight_matrix(reg.cov_eigen(), q);
    const int r_hat = est_cfg.r_fixed ? *est_cfg.r_fixed : wauto_ratio(reg, w, est_cfg.m, vartheta).r_hat;
    trace.r_hat_per_q.push_back(r_hat);
    double total = 0.0;
    for (int k = 1; k <= est_cfg.m; ++k) {
      const BicTerm term = bic_term(reg, k, w, r_hat, cfg.C);
      if (term.exact_fit && !exact) exact = q;
      total += term.bic;
      trace.per_lag_bic[static_cast<std::size_t>(k - 1)].push_back(term);
    }
    trace.totals.push_back(total);
  }

  if (exact) {
    trace.q_hat = *exact;
    return trace;
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < trace.totals.size(); ++i) {
    if (trace.totals[i] < trace.totals[best]) best = i;
  }
  trace.q_hat = trace.candidates[best];
  return trace;
}

}  // namespace detail

// BIC_k(q) at factor count r_hat, from the closed-form lag-k fit.
inline BicTerm bic_k(const TimePanel& panel, int k, int q, int r_hat, double C) {
  if (r_hat < 1 || r_hat >= q) fail(ErrorKind::InvalidConfig, "bic_k needs 1 <= r_hat < q");
  if (!(C > 0.0)) fail(ErrorKind::InvalidConfig, "BIC penalty constant C must be positive");
  if (k < 1 || k >= panel.n()) fail(ErrorKind::InvalidLag, "bic_k needs 1 <= k < n");
  if (q > std::min<Index>(panel.p(), panel.n() - k)) fail(ErrorKind::InvalidConfig, "q exceeds min(p, n - k)");
  const Matrix y = detail::centered_data(panel);
  detail::LaggedRegression reg(y, sym_eigen(lag_autocov(y, 0), y.cols()));
  return detail::bic_term(reg, k, weight_matrix(reg.cov_eigen(), q), r_hat, C);
}

inline BicTrace select_q(const TimePanel& panel, const BicConfig& cfg, const EstimatorConfig& est_cfg) {
  const Matrix y = detail::centered_data(panel);
  detail::LaggedRegression reg(y, sym_eigen(lag_autocov(y, 0), y.cols()));
  return detail::select_q(reg, cfg, est_cfg);
}

}  // namespace wfactor
