#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "wfactor/simulate.hpp"

using namespace wfactor;
using testutil::max_abs;

namespace {

double lag_corr(const Vector& x, int k) {
  const Vector c = x.array() - x.mean();
  return c.tail(c.size() - k).dot(c.head(c.size() - k)) / c.squaredNorm();
}

SimulationSpec small_spec(SimModel model) {
  SimulationSpec spec;
  spec.model = model;
  spec.n = 120;
  spec.p = 30;
  spec.r0 = 2;
  spec.r1 = model == SimModel::TwoStrength ? 1 : 0;
  spec.n_runs = 6;
  return spec;
}

}  // namespace

TEST(RngTest, Reproducible) {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 10; ++i) {
    const double x = a.normal();
    EXPECT_EQ(x, b.normal());
    EXPECT_NE(x, c.normal());
  }
  EXPECT_NE(mix_seed(7, 0), mix_seed(7, 1));
  EXPECT_EQ(mix_seed(7, 3), mix_seed(7, 3));
}

TEST(RngTest, NormalMoments) {
  Rng rng(1);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
}

TEST(Generate, ShapesAndOrthonormalLoadings) {
  for (SimModel model : {SimModel::Uniform, SimModel::TwoStrength}) {
    const SimulationSpec spec = small_spec(model);
    const SimulatedPanel sim = generate(spec, 5);
    EXPECT_EQ(sim.panel.n(), spec.n);
    EXPECT_EQ(sim.panel.p(), spec.p);
    EXPECT_EQ(sim.A_true.cols(), spec.r0);
    EXPECT_LE(orthonormality_error(sim.A_true), 1e-10);
    if (model == SimModel::TwoStrength) {
      EXPECT_EQ(sim.B_true.cols(), spec.r1);
      EXPECT_LE(orthonormality_error(sim.B_true), 1e-10);
    }
    EXPECT_TRUE(sim.panel.data().allFinite());
  }
}

TEST(Generate, Deterministic) {
  const SimulationSpec spec = small_spec(SimModel::Uniform);
  EXPECT_EQ(generate(spec, 9).panel.data(), generate(spec, 9).panel.data());
  EXPECT_NE(generate(spec, 9).panel.data(), generate(spec, 10).panel.data());
}

TEST(Generate, FactorAutocorrelationMatchesCoefficient) {
  Rng rng(3);
  Vector phi(1);
  phi << 0.8;
  const Matrix x = detail::ar1_series(rng, 5000, phi, 1.0);
  EXPECT_NEAR(lag_corr(x.col(0), 1), 0.8, 0.03);
  EXPECT_NEAR(lag_corr(x.col(0), 2), 0.64, 0.05);
}

TEST(Generate, MovingAverageCutoff) {
  Rng rng(4);
  Vector theta(1);
  theta << 0.9;
  const Matrix z = detail::ma1_series(rng, 20000, theta, 1.0);
  EXPECT_NEAR(lag_corr(z.col(0), 1), 0.9 / (1 + 0.81), 0.03);
  EXPECT_LE(std::abs(lag_corr(z.col(0), 2)), 0.05);
  EXPECT_LE(std::abs(lag_corr(z.col(0), 3)), 0.05);
}

TEST(Generate, UniformLoadingSecondMoment) {
  Rng rng(5);
  const Matrix a = detail::uniform_loadings(rng, 20000, 1, 1.0);
  EXPECT_NEAR(a.col(0).squaredNorm() / 20000.0, 1.0 / 3.0, 0.01);
  EXPECT_LE(a.cwiseAbs().maxCoeff(), 1.0);
  Rng rng2(5);
  const Matrix weak = detail::uniform_loadings(rng2, 100, 1, 0.5);
  EXPECT_LE(weak.cwiseAbs().maxCoeff(), std::pow(100.0, -0.25) + 1e-15);
}

TEST(MonteCarlo, NoiselessRecovery) {
  for (SimModel model : {SimModel::Uniform, SimModel::TwoStrength}) {
    SimulationSpec spec = small_spec(model);
    spec.r1 = 0;
    spec.noise_scale = 0.0;
    spec.n_runs = 3;
    for (auto& m : spec.methods) m.cfg.r_fixed = spec.r0;
    for (auto& m : spec.methods)
      if (m.cfg.method == Method::WAuto) m.cfg.q = spec.r0;
    const SimulationReport rep = run_monte_carlo(spec);
    for (const auto& run : rep.runs)
      for (const auto& out : run.outcomes) {
        EXPECT_TRUE(out.ok) << out.error;
        EXPECT_LE(out.distance, 1e-6);
      }
  }
}

TEST(MonteCarlo, SingleRun) {
  SimulationSpec spec = small_spec(SimModel::Uniform);
  spec.n_runs = 1;
  const SimulationReport rep = run_monte_carlo(spec);
  ASSERT_EQ(rep.runs.size(), 1u);
  for (const auto& m : rep.methods) {
    EXPECT_EQ(m.successes + m.failures, 1);
    EXPECT_EQ(m.sd_distance, 0.0);
  }
}

TEST(MonteCarlo, ThreadCountInvariant) {
  SimulationSpec spec = small_spec(SimModel::TwoStrength);
  const SimulationReport a = run_monte_carlo(spec);
  spec.threads = 3;
  const SimulationReport b = run_monte_carlo(spec);
  ASSERT_EQ(a.runs.size(), b.runs.size());
  for (std::size_t i = 0; i < a.runs.size(); ++i) {
    EXPECT_EQ(a.runs[i].seed, b.runs[i].seed);
    for (std::size_t j = 0; j < a.runs[i].outcomes.size(); ++j) {
      EXPECT_EQ(a.runs[i].outcomes[j].r_hat, b.runs[i].outcomes[j].r_hat);
      EXPECT_EQ(a.runs[i].outcomes[j].distance, b.runs[i].outcomes[j].distance);
    }
  }
  for (std::size_t j = 0; j < a.methods.size(); ++j) EXPECT_EQ(a.methods[j].mean_distance, b.methods[j].mean_distance);
}

TEST(MonteCarlo, SummaryArithmetic) {
  const SimulationReport rep = run_monte_carlo(small_spec(SimModel::Uniform));
  for (std::size_t j = 0; j < rep.methods.size(); ++j) {
    const auto& m = rep.methods[j];
    int hits = 0;
    double dist = 0.0;
    for (const auto& run : rep.runs) {
      hits += run.outcomes[j].r_hat == 2;
      dist += run.outcomes[j].distance;
    }
    EXPECT_EQ(m.hits, hits);
    EXPECT_DOUBLE_EQ(m.frequency, hits / 6.0);
    EXPECT_NEAR(m.mean_distance, dist / 6.0, 1e-15);
    EXPECT_GE(m.frequency, 0.0);
    EXPECT_LE(m.frequency, 1.0);
  }
}

TEST(MonteCarlo, InvalidSpec) {
  SimulationSpec spec = small_spec(SimModel::Uniform);
  spec.delta0 = 0.0;
  EXPECT_THROW(run_monte_carlo(spec), Error);
  spec = small_spec(SimModel::Uniform);
  spec.n_runs = 0;
  EXPECT_THROW(run_monte_carlo(spec), Error);
}

TEST(ParallelMap, OrderPreservedAndErrorsPropagate) {
  const auto out = parallel_map(20, 4, [](int i) { return i * i; });
  for (int i = 0; i < 20; ++i) EXPECT_EQ(out[static_cast<std::size_t>(i)], i * i);
  EXPECT_THROW(parallel_map(5, 2,
                            [](int i) {
                              if (i == 3) throw std::runtime_error("boom");
                              return i;
                            }),
               std::runtime_error);
}
