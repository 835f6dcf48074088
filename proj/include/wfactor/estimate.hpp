#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "wfactor/errors.hpp"
#include "wfactor/factor_core.hpp"
#include "wfactor/model_select.hpp"
#include "wfactor/tsstats.hpp"

namespace wfactor {

namespace detail {

inline void check_config(const EstimatorConfig& cfg, Index p, Index n) {
  if (cfg.m < 1) fail(ErrorKind::InvalidConfig, "m must be at least 1");
  if (cfg.m >= n) fail(ErrorKind::InvalidLag, "m must be smaller than n");
  if (cfg.vartheta_scale < 0.0) fail(ErrorKind::InvalidConfig, "vartheta_scale must be non-negative");
  if (cfg.q && (*cfg.q < 1 || *cfg.q > std::min(p, n))) {
    fail(ErrorKind::InvalidConfig, "q must satisfy 1 <= q <= min(p, n)");
  }
}

// Default search range: q - 1 for WAuto, 15 (capped at p - 1) otherwise.
inline int resolve_r_max(const EstimatorConfig& cfg, Index p, std::optional<int> q) {
  if (cfg.r_search_max) return *cfg.r_search_max;
  if (cfg.method == Method::WAuto) return *q - 1;
  return static_cast<int>(std::min<Index>(15, p - 1));
}

inline int resolve_r_fixed(const EstimatorConfig& cfg, int r_max, std::optional<int> q) {
  const int r = *cfg.r_fixed;
  // WAuto may use every one of the q weighted directions when the count is
  // supplied rather than searched.
  const int cap = cfg.method == Method::WAuto ? std::max(r_max, *q) : r_max;
  if (r < 1 || r > cap) {
    fail(ErrorKind::InvalidConfig, "r_fixed=" + std::to_string(r) + " exceeds the admissible maximum " +
                                       std::to_string(cap));
  }
  return r;
}

inline Matrix top_vectors(const Matrix& m, int r) { return sym_eigen(m, r).vectors; }

inline FactorFit estimate_centered(const Matrix& y, const EstimatorConfig& cfg) {
  const Index n = y.rows();
  const Index p = y.cols();
  check_config(cfg, p, n);
  FactorFit fit;
  fit.method = cfg.method;
  const EigenPairs cov_eigen = sym_eigen(lag_autocov(y, 0), p);

  switch (cfg.method) {
    case Method::Cov: {
      const int r_max = resolve_r_max(cfg, p, std::nullopt);
      const Vector theta = clamp_nonnegative(cov_eigen.values);
      fit.eigenvalues_per_lag = {theta};
      if (cfg.r_fixed) {
        fit.r_hat = resolve_r_fixed(cfg, r_max, std::nullopt);
      } else {
        const RatioSelection sel = ratio_argmax(theta, 0.0, r_max);
        fit.r_hat = sel.r_hat;
        fit.ratios = sel.ratios;
      }
      fit.A_hat = cov_eigen.vectors.leftCols(fit.r_hat);
      break;
    }
    case Method::Auto: {
      LagCovSet covs;
      covs.m = cfg.m;
      covs.n = n;
      covs.lag0 = lag_autocov(y, 0);
      for (int k = 1; k <= cfg.m; ++k) covs.lags.push_back(lag_autocov(y, k));
      const int r_max = resolve_r_max(cfg, p, std::nullopt);
      fit.eigenvalues_per_lag = unweighted_lag_values(covs);
      const double ratio_scale = static_cast<double>(p) / static_cast<double>(n);
      fit.vartheta = cfg.vartheta_scale * ratio_scale * ratio_scale;
      if (cfg.r_fixed) {
        fit.r_hat = resolve_r_fixed(cfg, r_max, std::nullopt);
      } else {
        const RatioSelection sel = select_r(fit.eigenvalues_per_lag, n, fit.vartheta, r_max);
        fit.r_hat = sel.r_hat;
        fit.ratios = sel.ratios;
      }
      fit.A_hat = top_vectors(m_hat_unweighted(covs), fit.r_hat);
      break;
    }
    case Method::WAuto: {
      LaggedRegression reg(y, cov_eigen);
      int q = 0;
      if (cfg.q) {
        q = *cfg.q;
      } else {
        q = detail::select_q(reg, cfg.bic, cfg).q_hat;
      }
      fit.q_used = q;
      const WeightMatrix w = weight_matrix(reg.cov_eigen(), q);
      const Matrix half = w.half();
      Matrix stacked(p, q * cfg.m);
      for (int k = 1; k <= cfg.m; ++k) {
        const Matrix b = reg.lag(k) * half;
        stacked.middleCols((k - 1) * q, q) = b;
        fit.eigenvalues_per_lag.push_back(low_rank_spectrum(b));
      }
      fit.vartheta = wauto_vartheta(cfg, p, n);
      const int r_max = resolve_r_max(cfg, p, q);
      if (cfg.r_fixed) {
        fit.r_hat = resolve_r_fixed(cfg, r_max, q);
      } else {
        if (r_max < 1 || r_max >= q) fail(ErrorKind::InvalidConfig, "WAuto needs 1 <= r_search_max < q");
        const RatioSelection sel = select_r(fit.eigenvalues_per_lag, n, fit.vartheta, r_max);
        fit.r_hat = sel.r_hat;
        fit.ratios = sel.ratios;
      }
      // Leading eigenvectors of sum_k B_k B_k^T are the leading left
      // singular vectors of [B_1 ... B_m].
      Eigen::JacobiSVD<Matrix> svd(stacked, Eigen::ComputeThinU);
      fit.A_hat = svd.matrixU().leftCols(fit.r_hat);
      apply_sign_convention(fit.A_hat);
      for (int k = 1; k <= cfg.m; ++k) fit.H_hat.push_back(reg.fit_given_loading(k, w, fit.A_hat).H_hat);
      break;
    }
  }
  fit.factors = y * fit.A_hat;
  return fit;
}

}  // namespace detail

inline FactorFit estimate(const TimePanel& panel, const EstimatorConfig& cfg) {
  return detail::estimate_centered(detail::centered_data(panel), cfg);
}

struct TwoStepFit {
  FactorFit strong;
  FactorFit weak;
  TimePanel residual_panel;
};

// Strong factors on y_t, then the same estimator on y_t - A A^T y_t.
inline TwoStepFit two_step(const TimePanel& panel, const EstimatorConfig& cfg) {
  const Matrix y = detail::centered_data(panel);
  TwoStepFit out;
  out.strong = detail::estimate_centered(y, cfg);
  const Matrix& a = out.strong.A_hat;
  Matrix residual = y - (y * a) * a.transpose();
  out.residual_panel = TimePanel(std::move(residual), panel.names(), true);
  out.weak = detail::estimate_centered(out.residual_panel.data(), cfg);
  return out;
}

}  // namespace wfactor
