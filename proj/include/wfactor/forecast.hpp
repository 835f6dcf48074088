#pragma once

// Factor-based forecasting: per-factor ARMA models chosen by AIC, h-step
// prediction mapped back through the loading matrix, and expanding-window
// evaluation with MAFE / MSFE.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "wfactor/errors.hpp"
#include "wfactor/estimate.hpp"
#include "wfactor/simulate.hpp"
#include "wfactor/tsstats.hpp"

namespace wfactor {

struct ArmaFit {
  int ar_order = 0;
  int ma_order = 0;
  std::vector<double> ar_coeffs;
  std::vector<double> ma_coeffs;
  double intercept = 0.0;  // process mean
  double innovation_variance = 1.0;
  double aic = 0.0;
  Vector residuals;
  bool fallback = false;  // every candidate failed; mean-only model
};

namespace detail {

constexpr int kMaxArmaOrder = 3;
constexpr double kRootTolerance = 1e-6;

// Inverse roots of 1 - c_1 z - ... - c_k z^k as companion eigenvalues.
inline std::vector<std::complex<double>> inverse_roots(const std::vector<double>& c) {
  const Index k = static_cast<Index>(c.size());
  if (k == 0) return {};
  Matrix companion = Matrix::Zero(k, k);
  for (Index j = 0; j < k; ++j) companion(0, j) = c[static_cast<std::size_t>(j)];
  for (Index i = 1; i < k; ++i) companion(i, i - 1) = 1.0;
  Eigen::EigenSolver<Matrix> solver(companion, false);
  const auto values = solver.eigenvalues();
  return {values.data(), values.data() + values.size()};
}

// An AR root sitting on top of an MA root makes the pair redundant.
constexpr double kCancellationTolerance = 0.1;

inline bool has_common_root(const std::vector<double>& ar, const std::vector<double>& ma) {
  std::vector<double> neg(ma.size());
  std::transform(ma.begin(), ma.end(), neg.begin(), [](double v) { return -v; });
  for (const auto& a : inverse_roots(ar))
    for (const auto& b : inverse_roots(neg))
      if (std::abs(a - b) < kCancellationTolerance) return true;
  return false;
}

inline double max_modulus(const std::vector<double>& c) {
  double out = 0.0;
  for (const auto& z : inverse_roots(c)) out = std::max(out, std::abs(z));
  return out;
}

inline bool is_stationary(const std::vector<double>& ar) { return max_modulus(ar) <= 1.0 - kRootTolerance; }

inline bool is_invertible(const std::vector<double>& ma) {
  std::vector<double> neg(ma.size());
  std::transform(ma.begin(), ma.end(), neg.begin(), [](double v) { return -v; });
  return max_modulus(neg) <= 1.0 - kRootTolerance;
}

struct ArmaParams {
  double mean = 0.0;
  std::vector<double> ar;
  std::vector<double> ma;

  Vector pack() const {
    Vector v(1 + ar.size() + ma.size());
    v(0) = mean;
    for (std::size_t i = 0; i < ar.size(); ++i) v(1 + static_cast<Index>(i)) = ar[i];
    for (std::size_t j = 0; j < ma.size(); ++j) v(1 + static_cast<Index>(ar.size() + j)) = ma[j];
    return v;
  }

  static ArmaParams unpack(const Vector& v, int p, int q) {
    ArmaParams out;
    out.mean = v(0);
    for (int i = 0; i < p; ++i) out.ar.push_back(v(1 + i));
    for (int j = 0; j < q; ++j) out.ma.push_back(v(1 + p + j));
    return out;
  }

  bool admissible() const { return is_stationary(ar) && is_invertible(ma); }
};

// Conditional residuals with pre-sample innovations set to zero; entries
// before `start` are zero and excluded from the sum of squares.
inline Vector arma_residuals(const Vector& x, const ArmaParams& prm, Index start) {
  const Index n = x.size();
  Vector e = Vector::Zero(n);
  for (Index t = start; t < n; ++t) {
    double v = x(t) - prm.mean;
    for (std::size_t i = 0; i < prm.ar.size(); ++i) {
      const Index s = t - 1 - static_cast<Index>(i);
      if (s >= 0) v -= prm.ar[i] * (x(s) - prm.mean);
    }
    for (std::size_t j = 0; j < prm.ma.size(); ++j) {
      const Index s = t - 1 - static_cast<Index>(j);
      if (s >= 0) v -= prm.ma[j] * e(s);
    }
    e(t) = v;
  }
  return e;
}

inline double css(const Vector& x, const ArmaParams& prm, Index start) {
  return arma_residuals(x, prm, start).tail(x.size() - start).squaredNorm();
}

inline Vector ols(const Matrix& design, const Vector& target) {
  return design.colPivHouseholderQr().solve(target);
}

// Hannan-Rissanen: long autoregression for innovation proxies, then a
// regression on lagged values and lagged proxies.
inline ArmaParams hannan_rissanen(const Vector& x, int p, int q) {
  const Index n = x.size();
  const double mean = x.mean();
  const Vector z = x.array() - mean;
  ArmaParams out;
  out.mean = mean;

  Vector innov = Vector::Zero(n);
  const Index long_order = std::min<Index>(n / 4, 10 + p + q);
  if (q > 0 && long_order >= 1) {
    const Index rows = n - long_order;
    Matrix design(rows, long_order);
    for (Index t = 0; t < rows; ++t)
      for (Index i = 0; i < long_order; ++i) design(t, i) = z(long_order + t - 1 - i);
    const Vector coef = ols(design, z.tail(rows));
    innov.tail(rows) = z.tail(rows) - design * coef;
  }

  const Index first = (q > 0 ? long_order + q : p);
  const Index rows = n - first;
  Matrix design(rows, p + q);
  for (Index t = 0; t < rows; ++t) {
    const Index tt = first + t;
    for (int i = 0; i < p; ++i) design(t, i) = z(tt - 1 - i);
    for (int j = 0; j < q; ++j) design(t, p + j) = innov(tt - 1 - j);
  }
  const Vector coef = ols(design, z.tail(rows));
  for (int i = 0; i < p; ++i) out.ar.push_back(coef(i));
  for (int j = 0; j < q; ++j) out.ma.push_back(coef(p + j));

  // Pull an inadmissible start back toward zero.
  for (int shrink = 0; shrink < 30 && !out.admissible(); ++shrink) {
    for (double& v : out.ar) v *= 0.8;
    for (double& v : out.ma) v *= 0.8;
  }
  return out;
}

// Levenberg-Marquardt on the conditional sum of squares, rejecting steps
// that leave the stationary / invertible region.
inline ArmaParams refine_css(const Vector& x, ArmaParams start_prm, Index start, int max_iter = 100) {
  const int p = static_cast<int>(start_prm.ar.size());
  const int q = static_cast<int>(start_prm.ma.size());
  Vector beta = start_prm.pack();
  const Index rows = x.size() - start;
  auto residual_vec = [&](const Vector& b) -> Vector {
    return arma_residuals(x, ArmaParams::unpack(b, p, q), start).tail(rows);
  };
  Vector r = residual_vec(beta);
  double s = r.squaredNorm();
  double damping = 1e-3;
  const Index k = beta.size();
  for (int iter = 0; iter < max_iter; ++iter) {
    Matrix jac(rows, k);
    for (Index c = 0; c < k; ++c) {
      Vector bumped = beta;
      const double step = 1e-7 * std::max(1.0, std::abs(beta(c)));
      bumped(c) += step;
      jac.col(c) = (residual_vec(bumped) - r) / step;
    }
    const Matrix jtj = jac.transpose() * jac;
    const Vector jtr = jac.transpose() * r;
    bool improved = false;
    for (int attempt = 0; attempt < 12; ++attempt) {
      Matrix lhs = jtj;
      lhs.diagonal() += damping * (jtj.diagonal().array() + 1e-12).matrix();
      const Vector delta = lhs.ldlt().solve(-jtr);
      const Vector trial = beta + delta;
      const ArmaParams trial_prm = ArmaParams::unpack(trial, p, q);
      if (trial.allFinite() && trial_prm.admissible()) {
        const Vector tr = residual_vec(trial);
        const double ts = tr.squaredNorm();
        if (ts < s) {
          const double gain = (s - ts) / std::max(s, 1e-300);
          beta = trial;
          r = tr;
          s = ts;
          damping = std::max(damping * 0.3, 1e-12);
          improved = true;
          if (gain < 1e-10) return ArmaParams::unpack(beta, p, q);
          break;
        }
      }
      damping *= 10.0;
    }
    if (!improved) break;
  }
  return ArmaParams::unpack(beta, p, q);
}

inline ArmaFit make_fit(const Vector& x, const ArmaParams& prm, Index start) {
  ArmaFit fit;
  fit.ar_order = static_cast<int>(prm.ar.size());
  fit.ma_order = static_cast<int>(prm.ma.size());
  fit.ar_coeffs = prm.ar;
  fit.ma_coeffs = prm.ma;
  fit.intercept = prm.mean;
  fit.residuals = arma_residuals(x, prm, start);
  const Index used = x.size() - start;
  const double sigma2 = fit.residuals.tail(used).squaredNorm() / static_cast<double>(used);
  fit.innovation_variance = std::max(sigma2, std::numeric_limits<double>::min());
  fit.aic = static_cast<double>(used) * std::log(fit.innovation_variance) +
            2.0 * static_cast<double>(fit.ar_order + fit.ma_order + 1);
  return fit;
}

}  // namespace detail

// AIC-selected ARMA(p, q) over the grid 0..max_p x 0..max_q. All candidates
// share the same conditioning window so their AIC values are comparable.
inline ArmaFit fit_arma(const Vector& series, int max_p = 3, int max_q = 3) {
  if (series.size() < 30) fail(ErrorKind::InvalidData, "fit_arma needs at least 30 observations");
  if (!series.allFinite()) fail(ErrorKind::InvalidData, "fit_arma series contains non-finite values");
  if (max_p < 0 || max_q < 0 || max_p > detail::kMaxArmaOrder || max_q > detail::kMaxArmaOrder) {
    fail(ErrorKind::InvalidConfig, "ARMA orders are limited to 0..3");
  }
  const Index start = std::max(max_p, max_q);
  std::optional<ArmaFit> best;
  for (int p = 0; p <= max_p; ++p) {
    for (int q = 0; q <= max_q; ++q) {
      detail::ArmaParams prm;
      if (p == 0 && q == 0) {
        prm.mean = series.mean();
      } else {
        prm = detail::refine_css(series, detail::hannan_rissanen(series, p, q), start);
        if (!prm.admissible() || detail::has_common_root(prm.ar, prm.ma)) continue;
      }
      ArmaFit cand = detail::make_fit(series, prm, start);
      if (!std::isfinite(cand.aic)) continue;
      if (!best || cand.aic < best->aic) best = std::move(cand);
    }
  }
  if (!best) {
    detail::ArmaParams prm;
    prm.mean = series.mean();
    ArmaFit fit = detail::make_fit(series, prm, start);
    fit.fallback = true;
    return fit;
  }
  return *best;
}

// h-step forecast from the end of `history`, future innovations zero.
inline double forecast_arma(const ArmaFit& fit, const Vector& history, int h) {
  if (h < 1) fail(ErrorKind::InvalidConfig, "forecast horizon h must be at least 1");
  detail::ArmaParams prm{fit.intercept, fit.ar_coeffs, fit.ma_coeffs};
  const Index n = history.size();
  const Vector e = detail::arma_residuals(history, prm, fit.ar_order);
  std::vector<double> z(static_cast<std::size_t>(n + h), 0.0);
  std::vector<double> innov(static_cast<std::size_t>(n + h), 0.0);
  for (Index t = 0; t < n; ++t) {
    z[static_cast<std::size_t>(t)] = history(t) - fit.intercept;
    innov[static_cast<std::size_t>(t)] = e(t);
  }
  for (Index t = n; t < n + h; ++t) {
    double v = 0.0;
    for (int i = 0; i < fit.ar_order; ++i) {
      const Index s = t - 1 - i;
      if (s >= 0) v += fit.ar_coeffs[static_cast<std::size_t>(i)] * z[static_cast<std::size_t>(s)];
    }
    for (int j = 0; j < fit.ma_order; ++j) {
      const Index s = t - 1 - j;
      if (s >= 0) v += fit.ma_coeffs[static_cast<std::size_t>(j)] * innov[static_cast<std::size_t>(s)];
    }
    z[static_cast<std::size_t>(t)] = v;
  }
  return fit.intercept + z[static_cast<std::size_t>(n + h - 1)];
}

// Steps 2-4 for a given loading: factors A^T y_t, per-factor ARMA forecast,
// mapped back as A x_{T+h}.
inline Vector forecast_from_loading(const Matrix& y, const Matrix& loading, int h) {
  const Matrix factors = y * loading;
  Vector x_ahead(loading.cols());
  for (Index j = 0; j < loading.cols(); ++j) {
    const Vector series = factors.col(j);
    x_ahead(j) = forecast_arma(fit_arma(series), series, h);
  }
  return loading * x_ahead;
}

inline Vector pipeline_forecast(const TimePanel& panel, const EstimatorConfig& est_cfg, int r_hat, int h) {
  EstimatorConfig cfg = est_cfg;
  cfg.r_fixed = r_hat;
  const FactorFit fit = estimate(panel, cfg);
  return forecast_from_loading(panel.data(), fit.A_hat, h);
}

// Column-standardized copy (mean 0, unit sample variance). Constant columns
// are centered only.
struct Standardizer {
  Vector mean;
  Vector scale;

  static Standardizer fit(const Matrix& y) {
    Standardizer s;
    s.mean = y.colwise().mean();
    s.scale.resize(y.cols());
    for (Index j = 0; j < y.cols(); ++j) {
      const double var = (y.col(j).array() - s.mean(j)).square().sum() / static_cast<double>(y.rows() - 1);
      s.scale(j) = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return s;
  }

  Matrix apply(const Matrix& y) const {
    return (y.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  }

  Vector invert(const Vector& z) const { return mean + z.cwiseProduct(scale); }
};

struct ForecastErrors {
  double mafe = 0.0;
  double msfe = 0.0;
};

// Mean absolute / squared error over all entries of the window x series grid.
inline ForecastErrors forecast_errors(const Matrix& predictions, const Matrix& targets) {
  if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols() || predictions.size() == 0) {
    fail(ErrorKind::InvalidData, "prediction and target grids must have the same non-empty shape");
  }
  const Eigen::ArrayXXd diff = (predictions - targets).array();
  const double count = static_cast<double>(diff.size());
  return {diff.abs().sum() / count, diff.square().sum() / count};
}

struct ForecastOptions {
  bool standardize_per_window = false;
  int threads = 1;
};

struct MethodForecast {
  std::string name;
  double mafe = 0.0;
  double msfe = 0.0;
  int failed_windows = 0;
  Matrix predictions;  // one row per successful window
};

struct ForecastReport {
  int h = 1;
  Index n1 = 0;
  Index n2 = 0;
  int r_hat = 1;
  Matrix targets;  // y_{T+h} for every window
  std::vector<MethodForecast> methods;
  ForecastErrors zero_forecast;

  Index windows() const { return n2 - h + 1; }

  const MethodForecast& method(const std::string& name) const {
    for (const auto& m : methods)
      if (m.name == name) return m;
    fail(ErrorKind::InvalidConfig, "no method named " + name + " in forecast report");
  }
};

inline ForecastReport expanding_window_eval(const TimePanel& panel, const std::vector<MethodSpec>& methods, int r_hat,
                                            int h, Index n1, const ForecastOptions& opts = {}) {
  const Index n = panel.n();
  const Index p = panel.p();
  if (h < 1) fail(ErrorKind::InvalidConfig, "forecast horizon h must be at least 1");
  if (n1 < 2 || n1 + h > n) fail(ErrorKind::InvalidConfig, "expanding window needs 2 <= n1 and n1 + h <= n");
  if (r_hat < 1) fail(ErrorKind::InvalidConfig, "r_hat must be at least 1");

  const Matrix y = opts.standardize_per_window ? panel.data() : Standardizer::fit(panel.data()).apply(panel.data());

  ForecastReport report;
  report.h = h;
  report.n1 = n1;
  report.n2 = n - n1;
  report.r_hat = r_hat;
  const Index windows = report.windows();
  report.targets.resize(windows, p);
  for (Index w = 0; w < windows; ++w) report.targets.row(w) = y.row(n1 + w + h - 1);

  // Window w trains on rows [0, n1 + w) and predicts row n1 + w + h - 1.
  struct WindowResult {
    std::vector<std::optional<Vector>> per_method;
    Vector zero;
  };
  auto run_window = [&](int w) {
    const Index t_end = n1 + w;
    Matrix train = y.topRows(t_end);
    std::optional<Standardizer> scaler;
    if (opts.standardize_per_window) {
      scaler = Standardizer::fit(train);
      train = scaler->apply(train);
    }
    const TimePanel train_panel(train, panel.names(), false);
    WindowResult out;
    for (const MethodSpec& m : methods) {
      try {
        Vector pred = pipeline_forecast(train_panel, m.cfg, r_hat, h);
        out.per_method.emplace_back(scaler ? scaler->invert(pred) : pred);
      } catch (const Error&) {
        out.per_method.emplace_back(std::nullopt);
      }
    }
    out.zero = scaler ? scaler->invert(Vector::Zero(p)) : Vector::Zero(p);
    return out;
  };
  const auto results = parallel_map(static_cast<int>(windows), opts.threads, run_window);

  Matrix zero_preds(windows, p);
  for (Index w = 0; w < windows; ++w) zero_preds.row(w) = results[static_cast<std::size_t>(w)].zero.transpose();
  report.zero_forecast = forecast_errors(zero_preds, report.targets);

  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    MethodForecast mf;
    mf.name = methods[mi].name;
    std::vector<Index> ok;
    for (Index w = 0; w < windows; ++w) {
      if (results[static_cast<std::size_t>(w)].per_method[mi]) ok.push_back(w);
    }
    mf.failed_windows = static_cast<int>(windows - static_cast<Index>(ok.size()));
    mf.predictions.resize(static_cast<Index>(ok.size()), p);
    Matrix targets(static_cast<Index>(ok.size()), p);
    for (std::size_t i = 0; i < ok.size(); ++i) {
      mf.predictions.row(static_cast<Index>(i)) = results[static_cast<std::size_t>(ok[i])].per_method[mi]->transpose();
      targets.row(static_cast<Index>(i)) = report.targets.row(ok[i]);
    }
    if (!ok.empty()) {
      const ForecastErrors err = forecast_errors(mf.predictions, targets);
      mf.mafe = err.mafe;
      mf.msfe = err.msfe;
    } else {
      mf.mafe = mf.msfe = std::numeric_limits<double>::quiet_NaN();
    }
    report.methods.push_back(std::move(mf));
  }
  return report;
}

}  // namespace wfactor
