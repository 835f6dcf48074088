#pragma once

// Time-series and matrix statistics shared by every estimator: centering,
// lagged sample autocovariances, symmetric eigendecomposition with a fixed
// sign convention, the column-space distance and varimax rotation.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "wfactor/errors.hpp"

namespace wfactor {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

// An n x p observation panel: rows are time points, columns are series.
class TimePanel {
 public:
  TimePanel() = default;

  explicit TimePanel(Matrix data, std::vector<std::string> names = {}, bool demeaned = false)
      : data_(std::move(data)), names_(std::move(names)), demeaned_(demeaned) {
    if (data_.rows() < 2 || data_.cols() < 1) {
      fail(ErrorKind::InvalidData, "panel needs n >= 2 rows and p >= 1 columns");
    }
    if (!all_finite(data_)) {
      fail(ErrorKind::InvalidData, "panel contains non-finite entries");
    }
    if (names_.empty()) {
      names_.reserve(static_cast<std::size_t>(data_.cols()));
      for (Index j = 0; j < data_.cols(); ++j) names_.push_back("v" + std::to_string(j + 1));
    } else if (static_cast<Index>(names_.size()) != data_.cols()) {
      fail(ErrorKind::InvalidData, "series name count does not match column count");
    }
  }

  const Matrix& data() const noexcept { return data_; }
  const std::vector<std::string>& names() const noexcept { return names_; }
  bool demeaned() const noexcept { return demeaned_; }
  Index n() const noexcept { return data_.rows(); }
  Index p() const noexcept { return data_.cols(); }

 private:
  Matrix data_;
  std::vector<std::string> names_;
  bool demeaned_ = false;
};

// Sample covariance (lag0) and lag-k autocovariances for k = 1..m.
struct LagCovSet {
  Matrix lag0;
  std::vector<Matrix> lags;  // lags[k - 1] holds the lag-k matrix
  int m = 0;
  Index n = 0;

  Index p() const noexcept { return lag0.rows(); }
  const Matrix& lag(int k) const { return lags.at(static_cast<std::size_t>(k - 1)); }
};

// Leading eigenpairs in descending order. Column j of `vectors` pairs with
// values(j); the largest-magnitude entry of every column is non-negative.
struct EigenPairs {
  Vector values;
  Matrix vectors;
};

inline TimePanel demean(const TimePanel& panel) {
  if (!all_finite(panel.data())) fail(ErrorKind::InvalidData, "panel contains non-finite entries");
  Matrix centered = panel.data().rowwise() - panel.data().colwise().mean();
  return TimePanel(std::move(centered), panel.names(), true);
}

// Flips columns so the entry of largest absolute value is non-negative
// (lowest row index wins ties).
inline void apply_sign_convention(Matrix& vectors) {
  for (Index j = 0; j < vectors.cols(); ++j) {
    Index arg = 0;
    double best = -1.0;
    for (Index i = 0; i < vectors.rows(); ++i) {
      const double a = std::abs(vectors(i, j));
      if (a > best) {
        best = a;
        arg = i;
      }
    }
    if (vectors(arg, j) < 0.0) vectors.col(j) *= -1.0;
  }
}

// Lag-k sample autocovariance (1/(n-k)) sum_{t>k} y_t y_{t-k}^T of centered data.
inline Matrix lag_autocov(const Matrix& y, int k) {
  const Index n = y.rows();
  if (k == 0) {
    Matrix s = (y.transpose() * y) / static_cast<double>(n);
    return 0.5 * (s + s.transpose());
  }
  return (y.bottomRows(n - k).transpose() * y.topRows(n - k)) / static_cast<double>(n - k);
}

inline LagCovSet sample_autocov(const TimePanel& panel, int m) {
  if (m < 1 || m >= panel.n()) {
    fail(ErrorKind::InvalidLag, "max lag m must satisfy 1 <= m < n (m=" + std::to_string(m) +
                                    ", n=" + std::to_string(panel.n()) + ")");
  }
  if (!panel.demeaned()) fail(ErrorKind::PreconditionViolated, "sample_autocov requires a demeaned panel");
  LagCovSet out;
  out.m = m;
  out.n = panel.n();
  out.lag0 = lag_autocov(panel.data(), 0);
  out.lags.reserve(static_cast<std::size_t>(m));
  for (int k = 1; k <= m; ++k) out.lags.push_back(lag_autocov(panel.data(), k));
  return out;
}

// Top-d eigenpairs of a symmetric matrix. The input is symmetrized first.
inline EigenPairs sym_eigen(const Matrix& m, Index d) {
  if (m.rows() != m.cols()) fail(ErrorKind::InvalidData, "sym_eigen needs a square matrix");
  if (!all_finite(m)) fail(ErrorKind::InvalidData, "sym_eigen input contains non-finite entries");
  const Index p = m.rows();
  if (d < 1 || d > p) fail(ErrorKind::InvalidData, "sym_eigen requires 1 <= d <= p");
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) fail(ErrorKind::InvalidData, "eigendecomposition did not converge");
  EigenPairs out;
  out.values = solver.eigenvalues().reverse().head(d);
  out.vectors = solver.eigenvectors().rowwise().reverse().leftCols(d);
  apply_sign_convention(out.vectors);
  return out;
}

// Descending eigenvalues only; cheaper than sym_eigen when vectors are unused.
inline Vector sym_eigenvalues(const Matrix& m) {
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) fail(ErrorKind::InvalidData, "eigendecomposition did not converge");
  return solver.eigenvalues().reverse();
}

inline double orthonormality_error(const Matrix& k) {
  const Matrix gram = k.transpose() * k;
  return (gram - Matrix::Identity(k.cols(), k.cols())).cwiseAbs().maxCoeff();
}

// Distance between column spaces: sqrt(1 - tr(P1 P2) / max(q1, q2)).
inline double subspace_distance(const Matrix& k1, const Matrix& k2) {
  if (k1.rows() != k2.rows()) fail(ErrorKind::InvalidData, "subspace_distance: row counts differ");
  if (k1.cols() < 1 || k2.cols() < 1) fail(ErrorKind::InvalidData, "subspace_distance: empty basis");
  if (orthonormality_error(k1) > 1e-8 || orthonormality_error(k2) > 1e-8) {
    fail(ErrorKind::PreconditionViolated, "subspace_distance inputs must be column-orthonormal");
  }
  const Matrix& wide = k1.cols() >= k2.cols() ? k1 : k2;
  const Matrix& narrow = k1.cols() >= k2.cols() ? k2 : k1;
  const double residual = (wide - narrow * (narrow.transpose() * wide)).squaredNorm();
  return std::sqrt(std::min(1.0, residual / static_cast<double>(wide.cols())));
}

// Orthonormal basis for the column space of a full-column-rank matrix.
inline Matrix orthonormalize(const Matrix& a) {
  Eigen::HouseholderQR<Matrix> qr(a);
  return qr.householderQ() * Matrix::Identity(a.rows(), a.cols());
}

// Raw varimax criterion: sum over columns of the variance of squared loadings.
inline double varimax_criterion(const Matrix& loadings) {
  const double p = static_cast<double>(loadings.rows());
  double total = 0.0;
  for (Index j = 0; j < loadings.cols(); ++j) {
    const Vector sq = loadings.col(j).array().square();
    const double mean = sq.sum() / p;
    total += sq.squaredNorm() / p - mean * mean;
  }
  return total;
}

struct VarimaxResult {
  Matrix rotated;
  Matrix rotation;
  int sweeps = 0;
};

// Angle that maximizes the two-column varimax criterion when the columns
// (x, y) are replaced by (x cos a + y sin a, -x sin a + y cos a).
inline double varimax_pair_angle(const Vector& x, const Vector& y) {
  const double p = static_cast<double>(x.size());
  const Eigen::ArrayXd u = x.array().square() - y.array().square();
  const Eigen::ArrayXd v = 2.0 * x.array() * y.array();
  const double a = u.sum();
  const double b = v.sum();
  const double c = (u.square() - v.square()).sum();
  const double d = 2.0 * (u * v).sum();
  const double num = d - 2.0 * a * b / p;
  const double den = c - (a * a - b * b) / p;
  return 0.25 * std::atan2(num, den);
}

inline VarimaxResult varimax(const Matrix& loadings, double tol = 1e-10, int max_sweeps = 500) {
  const Index r = loadings.cols();
  if (r < 1) fail(ErrorKind::InvalidData, "varimax needs at least one column");
  if (!all_finite(loadings) || loadings.cwiseAbs().maxCoeff() == 0.0) {
    fail(ErrorKind::InvalidData, "varimax input is degenerate (all zero or non-finite)");
  }
  VarimaxResult out{loadings, Matrix::Identity(r, r), 0};
  if (r == 1) return out;

  double current = varimax_criterion(out.rotated);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    for (Index j = 0; j < r - 1; ++j) {
      for (Index k = j + 1; k < r; ++k) {
        const double angle = varimax_pair_angle(out.rotated.col(j), out.rotated.col(k));
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        for (Matrix* target : {&out.rotated, &out.rotation}) {
          const Vector cj = target->col(j);
          const Vector ck = target->col(k);
          target->col(j) = c * cj + s * ck;
          target->col(k) = -s * cj + c * ck;
        }
      }
    }
    out.sweeps = sweep + 1;
    const double next = varimax_criterion(out.rotated);
    const bool converged = next - current < tol;
    current = next;
    if (converged) break;
  }
  return out;
}

}  // namespace wfactor
