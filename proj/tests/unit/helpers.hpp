#pragma once

#include <Eigen/Dense>

#include <cstdint>

#include "wfactor/matrix_factor.hpp"
#include "wfactor/simulate.hpp"
#include "wfactor/tsstats.hpp"

namespace testutil {

using wfactor::Index;
using wfactor::Matrix;
using wfactor::Vector;

inline Matrix gaussian(wfactor::Rng& rng, Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

inline Matrix random_orthonormal(wfactor::Rng& rng, Index p, Index q) {
  return wfactor::orthonormalize(gaussian(rng, p, q));
}

inline Matrix random_spd(wfactor::Rng& rng, Index p) {
  const Matrix g = gaussian(rng, p, p);
  return g * g.transpose() + 0.5 * Matrix::Identity(p, p);
}

// Panel with r AR(1) factors plus white noise.
inline Matrix factor_panel(std::uint64_t seed, Index n, Index p, int r, double noise = 1.0, Matrix* loading = nullptr) {
  wfactor::Rng rng(seed);
  const Matrix a = gaussian(rng, p, r);
  Matrix x(n, r);
  for (int j = 0; j < r; ++j) {
    const double phi = 0.5 + 0.4 * j / std::max(1, r - 1);
    double v = rng.normal();
    for (Index t = 0; t < n; ++t) {
      v = phi * v + rng.normal();
      x(t, j) = v;
    }
  }
  if (loading) *loading = wfactor::orthonormalize(a);
  return x * a.transpose() + noise * gaussian(rng, n, p);
}

struct PlantedMatrix {
  wfactor::MatrixPanel panel;
  Matrix R;
  Matrix C;
};

// Y_t = R X_t C^T + E_t with AR(1) entries in X_t and unit white noise.
inline PlantedMatrix matrix_panel(std::uint64_t seed, Index n, Index p1, Index p2, int d1, int d2, double noise = 1.0) {
  wfactor::Rng rng(seed);
  Matrix r(p1, d1), c(p2, d2);
  for (Index j = 0; j < d1; ++j)
    for (Index i = 0; i < p1; ++i) r(i, j) = rng.uniform(-1.0, 1.0);
  for (Index j = 0; j < d2; ++j)
    for (Index i = 0; i < p2; ++i) c(i, j) = rng.uniform(-1.0, 1.0);
  Matrix x = Matrix::Zero(d1, d2);
  const Index burn = 100;
  std::vector<Matrix> obs;
  obs.reserve(static_cast<std::size_t>(n));
  for (Index t = 0; t < n + burn; ++t) {
    for (Index j = 0; j < d2; ++j)
      for (Index i = 0; i < d1; ++i) x(i, j) = 0.8 * x(i, j) + rng.normal();
    Matrix y = r * x * c.transpose() + noise * gaussian(rng, p1, p2);
    if (t >= burn) obs.push_back(std::move(y));
  }
  return {wfactor::MatrixPanel(std::move(obs)), wfactor::orthonormalize(r), wfactor::orthonormalize(c)};
}

inline double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace testutil
