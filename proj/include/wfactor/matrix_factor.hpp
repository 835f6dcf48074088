#pragma once

// Weight-calibrated autocovariance estimation for matrix-valued series
// Y_t = R X_t C^T + E_t: row loadings from M1, column loadings from M2.

#include <Eigen/Dense>

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "wfactor/errors.hpp"
#include "wfactor/factor_core.hpp"
#include "wfactor/tsstats.hpp"

namespace wfactor {

class MatrixPanel {
 public:
  MatrixPanel() = default;

  explicit MatrixPanel(std::vector<Matrix> data, bool demeaned = false)
      : data_(std::move(data)), demeaned_(demeaned) {
    if (data_.size() < 2) fail(ErrorKind::InvalidData, "matrix panel needs at least 2 observations");
    const Index p1 = data_.front().rows();
    const Index p2 = data_.front().cols();
    if (p1 < 1 || p2 < 1) fail(ErrorKind::InvalidData, "matrix observations must be non-empty");
    for (std::size_t t = 0; t < data_.size(); ++t) {
      if (data_[t].rows() != p1 || data_[t].cols() != p2) {
        fail(ErrorKind::InvalidData, "matrix observation " + std::to_string(t) + " has inconsistent shape",
             static_cast<long>(t));
      }
      if (!data_[t].allFinite()) {
        fail(ErrorKind::InvalidData, "matrix observation " + std::to_string(t) + " has non-finite entries",
             static_cast<long>(t));
      }
    }
  }

  const std::vector<Matrix>& data() const noexcept { return data_; }
  const Matrix& at(Index t) const { return data_[static_cast<std::size_t>(t)]; }
  bool demeaned() const noexcept { return demeaned_; }
  Index n() const noexcept { return static_cast<Index>(data_.size()); }
  Index p1() const noexcept { return data_.empty() ? 0 : data_.front().rows(); }
  Index p2() const noexcept { return data_.empty() ? 0 : data_.front().cols(); }

 private:
  std::vector<Matrix> data_;
  bool demeaned_ = false;
};

inline MatrixPanel demean(const MatrixPanel& panel) {
  Matrix mean = Matrix::Zero(panel.p1(), panel.p2());
  for (const Matrix& y : panel.data()) mean += y;
  mean /= static_cast<double>(panel.n());
  std::vector<Matrix> out;
  out.reserve(panel.data().size());
  for (const Matrix& y : panel.data()) out.push_back(y - mean);
  return MatrixPanel(std::move(out), true);
}

inline MatrixPanel transpose(const MatrixPanel& panel) {
  std::vector<Matrix> out;
  out.reserve(panel.data().size());
  for (const Matrix& y : panel.data()) out.push_back(y.transpose());
  return MatrixPanel(std::move(out), panel.demeaned());
}

// Vector panel with row t = vec(Y_t) (column-major).
inline TimePanel vectorize(const MatrixPanel& panel) {
  Matrix y(panel.n(), panel.p1() * panel.p2());
  for (Index t = 0; t < panel.n(); ++t) y.row(t) = panel.at(t).reshaped().transpose();
  return TimePanel(std::move(y), {}, panel.demeaned());
}

namespace detail {

// Column slices as time-by-p1 matrices: slices[i].row(t) = Y_t(:, i)^T.
inline std::vector<Matrix> column_slices(const MatrixPanel& panel) {
  std::vector<Matrix> slices(static_cast<std::size_t>(panel.p2()), Matrix(panel.n(), panel.p1()));
  for (Index t = 0; t < panel.n(); ++t)
    for (Index i = 0; i < panel.p2(); ++i) slices[static_cast<std::size_t>(i)].row(t) = panel.at(t).col(i).transpose();
  return slices;
}

inline Matrix slice_autocov(const Matrix& zi, const Matrix& zj, int k, bool same) {
  const Index n = zi.rows();
  if (k == 0) {
    Matrix out = zi.transpose() * zj / static_cast<double>(n);
    return same ? Matrix(0.5 * (out + out.transpose())) : out;
  }
  const Index rows = n - k;
  return zi.bottomRows(rows).transpose() * zj.topRows(rows) / static_cast<double>(rows);
}

inline void check_cross_args(const MatrixPanel& panel, int k, Index i, Index j, Index slices) {
  if (!panel.demeaned()) fail(ErrorKind::PreconditionViolated, "matrix panel must be demeaned");
  if (k < 0 || k >= panel.n()) fail(ErrorKind::InvalidLag, "lag k must satisfy 0 <= k < n");
  if (i < 0 || i >= slices || j < 0 || j >= slices) {
    fail(ErrorKind::InvalidData, "slice index out of range");
  }
}

// Per-lag weighted matrices sum_i sum_j Omega_ij(k) W_j Omega_ij(k)^T for
// k = 1..m over the column slices.
inline std::vector<Matrix> weighted_row_lags(const MatrixPanel& panel, int m, int q1) {
  const Index p1 = panel.p1();
  const Index p2 = panel.p2();
  const Index n = panel.n();
  if (m < 1 || m >= n) fail(ErrorKind::InvalidLag, "max lag m must satisfy 1 <= m < n");
  if (q1 < 1 || q1 > std::min(p1, n)) fail(ErrorKind::InvalidConfig, "q must satisfy 1 <= q <= min(p_i, n)");
  const std::vector<Matrix> z = column_slices(panel);

  std::vector<Matrix> halves;
  halves.reserve(static_cast<std::size_t>(p2));
  for (Index j = 0; j < p2; ++j) {
    const Matrix& zj = z[static_cast<std::size_t>(j)];
    try {
      halves.push_back(weight_matrix(sym_eigen(slice_autocov(zj, zj, 0, true), p1), q1).half());
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::IllConditioned) throw;
      fail(ErrorKind::IllConditioned,
           "slice " + std::to_string(j) + " covariance is ill-conditioned at rank " + std::to_string(q1), static_cast<long>(j));
    }
  }

  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(m));
  for (int k = 1; k <= m; ++k) {
    Matrix acc = Matrix::Zero(p1, p1);
    for (Index i = 0; i < p2; ++i) {
      for (Index j = 0; j < p2; ++j) {
        const Matrix b =
            slice_autocov(z[static_cast<std::size_t>(i)], z[static_cast<std::size_t>(j)], k, false) *
            halves[static_cast<std::size_t>(j)];
        acc.noalias() += b * b.transpose();
      }
    }
    out.push_back(symmetrize(acc));
  }
  return out;
}

}  // namespace detail

// Cov(y_{t, . i}, y_{t-k, . j}) over column slices, p1 x p1.
inline Matrix cross_autocov_1(const MatrixPanel& panel, int k, Index i, Index j) {
  detail::check_cross_args(panel, k, i, j, panel.p2());
  const std::vector<Matrix> z = detail::column_slices(panel);
  return detail::slice_autocov(z[static_cast<std::size_t>(i)], z[static_cast<std::size_t>(j)], k, i == j);
}

// Cov(y_{t, i .}, y_{t-k, j .}) over row slices, p2 x p2.
inline Matrix cross_autocov_2(const MatrixPanel& panel, int k, Index i, Index j) {
  return cross_autocov_1(transpose(panel), k, i, j);
}

inline Matrix m_hat_rows(const MatrixPanel& panel, int m, int q1) {
  if (!panel.demeaned()) fail(ErrorKind::PreconditionViolated, "matrix panel must be demeaned");
  Matrix out = Matrix::Zero(panel.p1(), panel.p1());
  for (const Matrix& lag : detail::weighted_row_lags(panel, m, q1)) out += lag;
  return out;
}

inline Matrix m_hat_cols(const MatrixPanel& panel, int m, int q2) { return m_hat_rows(transpose(panel), m, q2); }

struct MatrixEstimatorConfig {
  int m = 2;
  std::optional<int> q1;
  std::optional<int> q2;
  std::optional<int> d1;
  std::optional<int> d2;
  double vartheta_scale = 0.1;
};

struct MatrixFactorFit {
  Matrix R_hat;
  Matrix C_hat;
  int d1 = 0;
  int d2 = 0;
  int q1 = 0;
  int q2 = 0;
  Vector spectrum_rows;
  Vector spectrum_cols;
  std::vector<double> ratios_rows;
  std::vector<double> ratios_cols;
};

namespace detail {

struct SideFit {
  Matrix loading;
  int d = 0;
  int q = 0;
  Vector spectrum;
  std::vector<double> ratios;
};

inline SideFit estimate_side(const MatrixPanel& panel, int m, std::optional<int> q_opt, std::optional<int> d_opt,
                             double vartheta_scale) {
  const Index p = panel.p1();
  const Index n = panel.n();
  const int q = q_opt ? *q_opt : static_cast<int>(std::min<Index>(15, std::min(p, n)));
  const std::vector<Matrix> lags = weighted_row_lags(panel, m, q);
  Matrix total = Matrix::Zero(p, p);
  for (const Matrix& lag : lags) total += lag;
  const EigenPairs eig = sym_eigen(total, p);

  SideFit out;
  out.q = q;
  out.spectrum = clamp_nonnegative(eig.values);
  if (d_opt) {
    if (*d_opt < 1 || *d_opt > p) fail(ErrorKind::InvalidConfig, "fixed rank must satisfy 1 <= d <= p_i");
    out.d = *d_opt;
  } else {
    const int r_max = std::min<int>(q - 1, static_cast<int>(p) - 1);
    if (r_max < 1) fail(ErrorKind::InvalidConfig, "rank search needs q >= 2 and p_i >= 2");
    std::vector<Vector> spectra;
    spectra.reserve(lags.size());
    for (const Matrix& lag : lags) spectra.push_back(sym_eigenvalues(lag));
    const double vartheta = vartheta_scale * static_cast<double>(p) / static_cast<double>(n);
    const RatioSelection sel = select_r(spectra, n, vartheta, r_max);
    out.d = sel.r_hat;
    out.ratios = sel.ratios;
  }
  out.loading = eig.vectors.leftCols(out.d);
  return out;
}

}  // namespace detail

inline MatrixFactorFit estimate_matrix(const MatrixPanel& panel, const MatrixEstimatorConfig& cfg = {}) {
  if (cfg.vartheta_scale < 0.0) fail(ErrorKind::InvalidConfig, "vartheta_scale must be non-negative");
  const MatrixPanel centered = demean(panel);
  const detail::SideFit rows = detail::estimate_side(centered, cfg.m, cfg.q1, cfg.d1, cfg.vartheta_scale);
  const detail::SideFit cols = detail::estimate_side(transpose(centered), cfg.m, cfg.q2, cfg.d2, cfg.vartheta_scale);
  MatrixFactorFit fit;
  fit.R_hat = rows.loading;
  fit.C_hat = cols.loading;
  fit.d1 = rows.d;
  fit.d2 = cols.d;
  fit.q1 = rows.q;
  fit.q2 = cols.q;
  fit.spectrum_rows = rows.spectrum;
  fit.spectrum_cols = cols.spectrum;
  fit.ratios_rows = rows.ratios;
  fit.ratios_cols = cols.ratios;
  return fit;
}

}  // namespace wfactor
