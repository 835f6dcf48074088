#pragma once

// Covariance (Cov), autocovariance (Auto) and weight-calibrated
// autocovariance (WAuto) building blocks: the rank-q weight matrix, the
// aggregated lag matrix, per-lag spectra, the cumulative-ratio factor-count
// rule and the closed-form reduced-rank autoregression fit.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "wfactor/errors.hpp"
#include "wfactor/tsstats.hpp"

namespace wfactor {

enum class Method { Cov, Auto, WAuto };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::Cov: return "Cov";
    case Method::Auto: return "Auto";
    case Method::WAuto: return "WAuto";
  }
  return "?";
}

inline Method parse_method(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "cov") return Method::Cov;
  if (s == "auto") return Method::Auto;
  if (s == "wauto") return Method::WAuto;
  fail(ErrorKind::InvalidConfig, "unknown method '" + s + "' (expected cov, auto or wauto)");
}

// Generalized-BIC settings used when the projection dimension q is chosen
// from the data.
struct BicConfig {
  double C = 0.2;
  int q0 = 15;
};

struct EstimatorConfig {
  Method method = Method::WAuto;
  int m = 2;
  std::optional<int> q;  // nullopt: select by generalized BIC
  double vartheta_scale = 0.1;
  std::optional<int> r_search_max;
  std::optional<int> r_fixed;
  BicConfig bic;
};

// Rank-q pseudo-inverse of the sample covariance built from its leading
// eigenpairs: W = Q diag(1/theta) Q^T.
struct WeightMatrix {
  Matrix Q;
  Vector theta;
  int q = 0;

  Matrix dense() const { return Q * theta.cwiseInverse().asDiagonal() * Q.transpose(); }

  // Q diag(theta^{-1/2}), so that W = half() * half()^T.
  Matrix half() const { return Q * theta.cwiseSqrt().cwiseInverse().asDiagonal(); }
};

struct FactorFit {
  Method method = Method::WAuto;
  int r_hat = 0;
  Matrix A_hat;
  Matrix factors;
  // Cov: one spectrum (theta). Auto: mu_k for k = 1..m. WAuto: lambda_k.
  std::vector<Vector> eigenvalues_per_lag;
  std::vector<double> ratios;
  std::optional<int> q_used;
  std::vector<Matrix> H_hat;
  double vartheta = 0.0;
};

struct RatioSelection {
  int r_hat = 1;
  std::vector<double> ratios;
};

constexpr double kConditioningFloor = 1e-12;

// Weight matrix from a precomputed descending covariance spectrum (vectors
// must hold at least q columns).
inline WeightMatrix weight_matrix(const EigenPairs& cov_eigen, int q) {
  if (q < 1 || q > cov_eigen.values.size()) {
    fail(ErrorKind::InvalidConfig, "weight matrix rank q=" + std::to_string(q) + " outside [1, " +
                                       std::to_string(cov_eigen.values.size()) + "]");
  }
  const double floor = kConditioningFloor * cov_eigen.values(0);
  if (!(cov_eigen.values(q - 1) > floor)) {
    int admissible = 0;
    while (admissible < cov_eigen.values.size() && cov_eigen.values(admissible) > floor) ++admissible;
    fail(ErrorKind::IllConditioned,
         "covariance eigenvalue " + std::to_string(q) + " is below the conditioning floor; largest admissible q is " +
             std::to_string(admissible),
         admissible);
  }
  return WeightMatrix{cov_eigen.vectors.leftCols(q), cov_eigen.values.head(q), q};
}

inline WeightMatrix weight_matrix(const LagCovSet& covs, int q) {
  const Index cap = std::min<Index>(covs.p(), covs.n);
  if (q < 1 || q > cap) {
    fail(ErrorKind::InvalidConfig, "weight matrix rank q must satisfy 1 <= q <= min(p, n)");
  }
  return weight_matrix(sym_eigen(covs.lag0, covs.p()), q);
}

// Q (Q^T Omega Q)^{-1} Q^T, the projected-inverse form of the weight matrix.
inline Matrix projected_inverse(const Matrix& lag0, const Matrix& Q) {
  const Matrix inner = Q.transpose() * lag0 * Q;
  return Q * inner.ldlt().solve(Q.transpose());
}

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

// sum_k Omega(k) W Omega(k)^T
inline Matrix m_hat(const LagCovSet& covs, const WeightMatrix& w) {
  if (covs.m < 1) fail(ErrorKind::InvalidData, "m_hat needs at least one lag");
  if (w.Q.rows() != covs.p()) fail(ErrorKind::InvalidData, "weight matrix dimension does not match covariances");
  const Matrix half = w.half();
  Matrix out = Matrix::Zero(covs.p(), covs.p());
  for (const Matrix& lag : covs.lags) {
    const Matrix b = lag * half;
    out.noalias() += b * b.transpose();
  }
  return symmetrize(out);
}

// Unweighted aggregate sum_k Omega(k) Omega(k)^T.
inline Matrix m_hat_unweighted(const LagCovSet& covs) {
  Matrix out = Matrix::Zero(covs.p(), covs.p());
  for (const Matrix& lag : covs.lags) out.noalias() += lag * lag.transpose();
  return symmetrize(out);
}

inline Vector clamp_nonnegative(Vector v) { return v.cwiseMax(0.0); }

// Per-lag eigenpairs of Omega(k) W Omega(k)^T (truncated to q) or, without
// a weight, of Omega(k) Omega(k)^T (all p).
inline std::vector<EigenPairs> per_lag_spectra(const LagCovSet& covs, const std::optional<WeightMatrix>& w) {
  std::vector<EigenPairs> out;
  out.reserve(covs.lags.size());
  for (const Matrix& lag : covs.lags) {
    EigenPairs e;
    if (w) {
      const Matrix b = lag * w->half();
      e = sym_eigen(b * b.transpose(), w->q);
    } else {
      e = sym_eigen(lag * lag.transpose(), covs.p());
    }
    e.values = clamp_nonnegative(e.values);
    out.push_back(std::move(e));
  }
  return out;
}

namespace detail {

// Nonzero spectrum of B B^T through the q x q Gram matrix B^T B.
inline Vector low_rank_spectrum(const Matrix& b) {
  return clamp_nonnegative(sym_eigenvalues(b.transpose() * b));
}

inline std::vector<Vector> weighted_lag_values(const LagCovSet& covs, const WeightMatrix& w) {
  const Matrix half = w.half();
  std::vector<Vector> out;
  out.reserve(covs.lags.size());
  for (const Matrix& lag : covs.lags) out.push_back(low_rank_spectrum(lag * half));
  return out;
}

inline std::vector<Vector> unweighted_lag_values(const LagCovSet& covs) {
  std::vector<Vector> out;
  out.reserve(covs.lags.size());
  for (const Matrix& lag : covs.lags) out.push_back(clamp_nonnegative(sym_eigenvalues(lag * lag.transpose())));
  return out;
}

// argmax_j (s_j + vartheta) / (s_{j+1} + vartheta) over j = 1..r_max,
// smallest j on ties.
inline RatioSelection ratio_argmax(const Vector& aggregate, double vartheta, int r_max) {
  if (r_max < 1) fail(ErrorKind::InvalidConfig, "ratio search needs r_max >= 1");
  if (aggregate.size() < r_max + 1) {
    fail(ErrorKind::InvalidData, "spectrum too short for ratio search up to " + std::to_string(r_max));
  }
  RatioSelection out;
  out.ratios.reserve(static_cast<std::size_t>(r_max));
  double best = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < r_max; ++j) {
    const double den = aggregate(j + 1) + vartheta;
    if (!(den > 0.0)) {
      fail(ErrorKind::DegenerateSpectrum, "zero denominator in eigenvalue ratio at j=" + std::to_string(j + 1));
    }
    const double ratio = (aggregate(j) + vartheta) / den;
    out.ratios.push_back(ratio);
    if (ratio > best) {
      best = ratio;
      out.r_hat = j + 1;
    }
  }
  return out;
}

}  // namespace detail

// Lag-weighted cumulative ratio estimator of the factor count. spectra[k-1]
// is the descending spectrum for lag k.
inline RatioSelection select_r(const std::vector<Vector>& spectra, Index n, double vartheta, int r_max) {
  if (spectra.empty()) fail(ErrorKind::InvalidData, "select_r needs at least one spectrum");
  if (vartheta < 0.0) fail(ErrorKind::InvalidConfig, "vartheta must be non-negative");
  if (r_max < 1) fail(ErrorKind::InvalidConfig, "select_r needs r_max >= 1");
  Vector aggregate = Vector::Zero(r_max + 1);
  for (std::size_t i = 0; i < spectra.size(); ++i) {
    const Vector& s = spectra[i];
    if (s.size() < r_max + 1) fail(ErrorKind::InvalidData, "spectrum shorter than r_max + 1");
    const double k = static_cast<double>(i + 1);
    aggregate += (1.0 - k / static_cast<double>(n)) * s.head(r_max + 1).cwiseMax(0.0);
  }
  return detail::ratio_argmax(aggregate, vartheta, r_max);
}

struct RrrFit {
  Matrix A_hat;  // p x r
  Matrix H_hat;  // q x r
  double objective = 0.0;
};

namespace detail {

// Shared state for reduced-rank autoregressions on one centered panel: the
// covariance spectrum and lag matrices are computed once and reused across
// (k, q, r) requests.
class LaggedRegression {
 public:
  LaggedRegression(const Matrix& y, EigenPairs cov_eigen) : y_(y), cov_eigen_(std::move(cov_eigen)) {}

  const EigenPairs& cov_eigen() const noexcept { return cov_eigen_; }
  const Matrix& data() const noexcept { return y_; }

  const Matrix& lag(int k) {
    while (static_cast<int>(lags_.size()) < k) {
      lags_.push_back(lag_autocov(y_, static_cast<int>(lags_.size()) + 1));
    }
    return lags_[static_cast<std::size_t>(k - 1)];
  }

  // Top-r eigenvectors of Omega(k) W Omega(k)^T, via the thin SVD of
  // Omega(k) Q diag(theta^{-1/2}).
  Matrix loading(int k, const WeightMatrix& w, int r) {
    const Matrix b = lag(k) * w.half();
    Eigen::JacobiSVD<Matrix> svd(b, Eigen::ComputeThinU);
    Matrix a = svd.matrixU().leftCols(r);
    apply_sign_convention(a);
    return a;
  }

  // Least-squares H for a fixed loading and the resulting residual sum.
  RrrFit fit_given_loading(int k, const WeightMatrix& w, Matrix a) {
    const Index n = y_.rows();
    const Matrix y_lead = y_.bottomRows(n - k);
    const Matrix y_proj = y_.topRows(n - k) * w.Q;
    const Matrix gram = y_proj.transpose() * y_proj;
    const Vector gram_spec = sym_eigenvalues(gram);
    if (!(gram_spec(gram_spec.size() - 1) > kConditioningFloor * std::max(gram_spec(0), 0.0))) {
      fail(ErrorKind::IllConditioned, "projected lagged design is singular at k=" + std::to_string(k), w.q);
    }
    RrrFit fit;
    fit.H_hat = gram.ldlt().solve(y_proj.transpose() * (y_lead * a));
    fit.objective = (y_lead - y_proj * fit.H_hat * a.transpose()).squaredNorm();
    fit.A_hat = std::move(a);
    return fit;
  }

  RrrFit solve(int k, const WeightMatrix& w, int r) { return fit_given_loading(k, w, loading(k, w, r)); }

 private:
  Matrix y_;
  EigenPairs cov_eigen_;
  std::vector<Matrix> lags_;
};

inline Matrix centered_data(const TimePanel& panel) {
  return panel.demeaned() ? panel.data() : demean(panel).data();
}

}  // namespace detail

// Closed-form solution of the rank-constrained lag-k regression of y_t on
// Q^T y_{t-k}.
inline RrrFit rrr_solution(const TimePanel& panel, int k, int q, int r) {
  if (k < 1 || k >= panel.n()) fail(ErrorKind::InvalidLag, "rrr_solution needs 1 <= k < n");
  const Index cap = std::min<Index>(panel.p(), panel.n() - k);
  // r == q is allowed: the constrained problem stays well posed and it
  // covers the scalar p = 1 case.
  if (r < 1 || r > q || q > cap) {
    fail(ErrorKind::InvalidConfig, "rrr_solution needs 1 <= r <= q <= min(p, n - k)");
  }
  const Matrix y = detail::centered_data(panel);
  detail::LaggedRegression reg(y, sym_eigen(lag_autocov(y, 0), y.cols()));
  return reg.solve(k, weight_matrix(reg.cov_eigen(), q), r);
}

}  // namespace wfactor
