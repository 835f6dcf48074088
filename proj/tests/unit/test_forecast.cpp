#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "wfactor/forecast.hpp"

using namespace wfactor;
using testutil::max_abs;

namespace {

Vector ar1(std::uint64_t seed, Index n, double phi, double mean = 0.0) {
  Rng rng(seed);
  Vector out(n);
  double v = rng.normal() / std::sqrt(1.0 - phi * phi);
  for (Index t = 0; t < n; ++t) {
    v = phi * v + rng.normal();
    out(t) = mean + v;
  }
  return out;
}

ArmaFit manual_fit(double mean, std::vector<double> ar, std::vector<double> ma) {
  ArmaFit fit;
  fit.ar_order = static_cast<int>(ar.size());
  fit.ma_order = static_cast<int>(ma.size());
  fit.ar_coeffs = std::move(ar);
  fit.ma_coeffs = std::move(ma);
  fit.intercept = mean;
  return fit;
}

std::vector<MethodSpec> small_methods(int q0) {
  std::vector<MethodSpec> methods = default_methods(2);
  for (auto& m : methods) m.cfg.bic.q0 = q0;
  return methods;
}

}  // namespace

TEST(FitArma, WhiteNoiseSelectsZeroOrder) {
  int zero = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    Vector x(200);
    for (Index t = 0; t < 200; ++t) x(t) = rng.normal();
    const ArmaFit fit = fit_arma(x);
    if (fit.ar_order == 0 && fit.ma_order == 0) ++zero;
  }
  EXPECT_GE(zero, 80);
}

TEST(FitArma, RecoversAr1) {
  const ArmaFit fit = fit_arma(ar1(3, 500, 0.8));
  EXPECT_EQ(fit.ar_order, 1);
  EXPECT_EQ(fit.ma_order, 0);
  ASSERT_EQ(fit.ar_coeffs.size(), 1u);
  EXPECT_NEAR(fit.ar_coeffs[0], 0.8, 0.05);
  EXPECT_FALSE(fit.fallback);
}

TEST(FitArma, ConstantPlusNoiseIntercept) {
  Rng rng(4);
  Vector x(300);
  for (Index t = 0; t < 300; ++t) x(t) = 5.0 + 1e-3 * rng.normal();
  EXPECT_NEAR(fit_arma(x).intercept, 5.0, 1e-3);
}

TEST(FitArma, SelectedAicNotWorseThanMeanModel) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Vector x = ar1(seed + 10, 150, 0.3 + 0.05 * static_cast<double>(seed));
    const ArmaFit best = fit_arma(x);
    const ArmaFit mean_only = fit_arma(x, 0, 0);
    EXPECT_LE(best.aic, mean_only.aic + 1e-9);
    EXPECT_TRUE(detail::is_stationary(best.ar_coeffs));
    EXPECT_TRUE(detail::is_invertible(best.ma_coeffs));
  }
}

TEST(FitArma, RejectsBadInput) {
  try {
    fit_arma(Vector::Zero(29));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidData);
  }
  Vector bad = ar1(1, 50, 0.5);
  bad(7) = std::nan("");
  try {
    fit_arma(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidData);
  }
  try {
    fit_arma(ar1(1, 50, 0.5), 4, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
  }
}

TEST(ForecastArma, Ar1ClosedForm) {
  const ArmaFit fit = manual_fit(2.0, {0.6}, {});
  const Vector history = ar1(5, 40, 0.6, 2.0);
  const double last = history(39);
  for (int h = 1; h <= 5; ++h) {
    EXPECT_NEAR(forecast_arma(fit, history, h), 2.0 + std::pow(0.6, h) * (last - 2.0), 1e-12);
    EXPECT_LE(std::abs(forecast_arma(fit, history, h) - 2.0), std::abs(last - 2.0) + 1e-15);
  }
}

TEST(ForecastArma, MeanModelReturnsIntercept) {
  const ArmaFit fit = manual_fit(-1.5, {}, {});
  EXPECT_DOUBLE_EQ(forecast_arma(fit, ar1(6, 40, 0.2), 3), -1.5);
}

TEST(ForecastArma, Arma11StateOracle) {
  const double phi = 0.5, theta = 0.3, mu = 0.7;
  const ArmaFit fit = manual_fit(mu, {phi}, {theta});
  const Vector history = ar1(7, 60, 0.4, mu);
  double e = 0.0;
  for (Index t = 1; t < history.size(); ++t) e = (history(t) - mu) - phi * (history(t - 1) - mu) - theta * e;
  const double one_step = phi * (history(59) - mu) + theta * e;
  for (int h = 1; h <= 4; ++h) {
    EXPECT_NEAR(forecast_arma(fit, history, h), mu + std::pow(phi, h - 1) * one_step, 1e-10);
  }
}

TEST(ForecastArma, RejectsZeroHorizon) {
  try {
    forecast_arma(manual_fit(0.0, {}, {}), ar1(1, 40, 0.1), 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
  }
}

TEST(Pipeline, IdentityLoadingIsComponentwise) {
  Matrix y(80, 3);
  for (Index j = 0; j < 3; ++j) y.col(j) = ar1(20 + static_cast<std::uint64_t>(j), 80, 0.3 * static_cast<double>(j + 1));
  const Vector got = forecast_from_loading(y, Matrix::Identity(3, 3), 2);
  for (Index j = 0; j < 3; ++j) {
    const Vector col = y.col(j);
    EXPECT_DOUBLE_EQ(got(j), forecast_arma(fit_arma(col), col, 2));
  }
}

TEST(Pipeline, ForecastLiesInLoadingSpan) {
  const TimePanel panel(testutil::factor_panel(30, 150, 12, 2));
  EstimatorConfig cfg;
  cfg.bic.q0 = 8;
  const Vector pred = pipeline_forecast(panel, cfg, 2, 1);
  cfg.r_fixed = 2;
  const Matrix a = estimate(panel, cfg).A_hat;
  EXPECT_LE((pred - a * (a.transpose() * pred)).norm(), 1e-10 * (1.0 + pred.norm()));
}

TEST(ForecastErrorsTest, PerfectAndConstantError) {
  Rng rng(8);
  const Matrix t = testutil::gaussian(rng, 5, 4);
  const ForecastErrors perfect = forecast_errors(t, t);
  EXPECT_EQ(perfect.mafe, 0.0);
  EXPECT_EQ(perfect.msfe, 0.0);
  const ForecastErrors shifted = forecast_errors(t.array() + 0.5, t);
  EXPECT_NEAR(shifted.mafe, 0.5, 1e-12);
  EXPECT_NEAR(shifted.msfe, 0.25, 1e-12);
  EXPECT_THROW(forecast_errors(t, t.leftCols(3)), Error);
}

TEST(ExpandingWindow, ZeroForecastOnWhiteNoise) {
  Rng rng(9);
  const TimePanel panel(testutil::gaussian(rng, 1000, 50));
  const ForecastReport rep = expanding_window_eval(panel, {}, 1, 1, 950);
  EXPECT_EQ(rep.windows(), 50);
  EXPECT_NEAR(rep.zero_forecast.mafe, std::sqrt(2.0 / M_PI), 0.02);
}

TEST(ExpandingWindow, PlantedFactorBeatsZero) {
  const TimePanel panel(testutil::factor_panel(31, 260, 20, 1, 0.5));
  const ForecastReport rep = expanding_window_eval(panel, small_methods(10), 1, 1, 230);
  for (const auto& m : rep.methods) {
    EXPECT_EQ(m.failed_windows, 0) << m.name;
    EXPECT_LT(m.msfe, rep.zero_forecast.msfe) << m.name;
  }
}

TEST(ExpandingWindow, ThreadCountInvariant) {
  const TimePanel panel(testutil::factor_panel(32, 140, 10, 1));
  ForecastOptions one;
  ForecastOptions many;
  many.threads = 3;
  const ForecastReport a = expanding_window_eval(panel, small_methods(6), 1, 2, 120, one);
  const ForecastReport b = expanding_window_eval(panel, small_methods(6), 1, 2, 120, many);
  ASSERT_EQ(a.methods.size(), b.methods.size());
  for (std::size_t i = 0; i < a.methods.size(); ++i) {
    EXPECT_EQ(a.methods[i].failed_windows, 0);
    EXPECT_EQ(a.methods[i].predictions, b.methods[i].predictions);
    EXPECT_EQ(a.methods[i].msfe, b.methods[i].msfe);
  }
}

TEST(ExpandingWindow, PerWindowStandardizationUsesRawScale) {
  Matrix y = testutil::factor_panel(33, 140, 8, 1, 0.3);
  y.array() += 10.0;
  ForecastOptions opts;
  opts.standardize_per_window = true;
  const ForecastReport rep = expanding_window_eval(TimePanel(y), small_methods(5), 1, 1, 125, opts);
  EXPECT_EQ(rep.targets, y.bottomRows(15));
  for (const auto& m : rep.methods) EXPECT_LT(m.msfe, rep.zero_forecast.msfe) << m.name;
}

TEST(ExpandingWindow, InvalidArguments) {
  const TimePanel panel(testutil::factor_panel(34, 60, 5, 1));
  EXPECT_THROW(expanding_window_eval(panel, {}, 1, 0, 50), Error);
  EXPECT_THROW(expanding_window_eval(panel, {}, 1, 11, 50), Error);
  EXPECT_THROW(expanding_window_eval(panel, {}, 0, 1, 50), Error);
}
