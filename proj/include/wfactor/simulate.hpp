#pragma once

// Data-generating processes for the uniform-strength and two-strength
// factor models, plus a seeded Monte Carlo driver comparing estimators.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "wfactor/errors.hpp"
#include "wfactor/estimate.hpp"
#include "wfactor/tsstats.hpp"

namespace wfactor {

// 64-bit finalizer from SplitMix64.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t base_seed, std::uint64_t run_index) noexcept {
  return splitmix64(base_seed ^ splitmix64(run_index + 0x632BE59BD9B4E019ULL));
}

// mt19937_64 with platform-independent uniform and normal transforms. The
// standard library distributions are implementation-defined, so they are
// avoided to keep panels bit-identical across toolchains.
class Rng {
 public:
  static constexpr const char* kName = "mt19937_64+polar";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Marsaglia polar method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u = 0.0, v = 0.0, s = 0.0;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  double normal(double sd) { return sd * normal(); }

  // Uniform on (-hi, -lo) U (lo, hi): a fair sign times a uniform magnitude.
  double two_sided(double lo, double hi) {
    const double sign = uniform() < 0.5 ? -1.0 : 1.0;
    return sign * uniform(lo, hi);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

enum class SimModel { Uniform, TwoStrength };

inline const char* to_string(SimModel m) { return m == SimModel::Uniform ? "uniform" : "two-strength"; }

struct MethodSpec {
  std::string name;
  EstimatorConfig cfg;
};

inline std::vector<MethodSpec> default_methods(int m = 2) {
  std::vector<MethodSpec> out;
  for (Method method : {Method::Cov, Method::Auto, Method::WAuto}) {
    EstimatorConfig cfg;
    cfg.method = method;
    cfg.m = m;
    out.push_back({to_string(method), cfg});
  }
  return out;
}

struct SimulationSpec {
  SimModel model = SimModel::Uniform;
  Index n = 300;
  Index p = 100;
  int r0 = 3;
  int r1 = 0;
  double delta0 = 1.0;
  double delta1 = 1.0;
  int n_runs = 200;
  std::uint64_t base_seed = 7;
  int burn_in = 200;
  std::vector<MethodSpec> methods = default_methods();
  int threads = 1;
  // Multiplier on the idiosyncratic component; 0 gives noiseless panels.
  double noise_scale = 1.0;
};

inline void validate(const SimulationSpec& spec) {
  if (spec.n < 2 || spec.p < 1) fail(ErrorKind::InvalidConfig, "simulation needs n >= 2 and p >= 1");
  if (spec.r0 < 1 || spec.r1 < 0) fail(ErrorKind::InvalidConfig, "simulation needs r0 >= 1 and r1 >= 0");
  if (!(spec.delta0 > 0.0 && spec.delta0 <= 1.0)) fail(ErrorKind::InvalidConfig, "delta0 must lie in (0, 1]");
  if (spec.model == SimModel::TwoStrength && !(spec.delta1 > 0.0 && spec.delta1 <= spec.delta0)) {
    fail(ErrorKind::InvalidConfig, "delta1 must lie in (0, delta0]");
  }
  if (spec.n_runs < 1) fail(ErrorKind::InvalidConfig, "n_runs must be at least 1");
  if (spec.burn_in < 0) fail(ErrorKind::InvalidConfig, "burn_in must be non-negative");
}

struct SimulatedPanel {
  TimePanel panel;
  Matrix A_true;
  Matrix B_true;  // empty for the uniform model
};

namespace detail {

inline Matrix uniform_loadings(Rng& rng, Index p, int r, double delta) {
  const double bound = std::pow(static_cast<double>(p), -(1.0 - delta) / 2.0);
  Matrix out(p, r);
  for (Index j = 0; j < r; ++j)
    for (Index i = 0; i < p; ++i) out(i, j) = rng.uniform(-bound, bound);
  return out;
}

inline Matrix left_singular_basis(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU);
  Matrix u = svd.matrixU().leftCols(a.cols());
  apply_sign_convention(u);
  return u;
}

// AR(1) columns started from their stationary marginal; returns total rows.
inline Matrix ar1_series(Rng& rng, Index rows, const Vector& phi, double innovation_sd) {
  Matrix out(rows, phi.size());
  for (Index j = 0; j < phi.size(); ++j) {
    double x = rng.normal(innovation_sd / std::sqrt(1.0 - phi(j) * phi(j)));
    for (Index t = 0; t < rows; ++t) {
      x = phi(j) * x + rng.normal(innovation_sd);
      out(t, j) = x;
    }
  }
  return out;
}

inline Matrix ma1_series(Rng& rng, Index rows, const Vector& theta, double innovation_sd) {
  Matrix out(rows, theta.size());
  for (Index j = 0; j < theta.size(); ++j) {
    double prev = rng.normal(innovation_sd);
    for (Index t = 0; t < rows; ++t) {
      const double cur = rng.normal(innovation_sd);
      out(t, j) = cur + theta(j) * prev;
      prev = cur;
    }
  }
  return out;
}

inline Vector two_sided_coefficients(Rng& rng, Index count, double lo, double hi) {
  Vector out(count);
  for (Index i = 0; i < count; ++i) out(i) = rng.two_sided(lo, hi);
  return out;
}

}  // namespace detail

// y_t = A~ x~_t + e_t with AR(1) factors and vector-MA(1) idiosyncratic
// errors e_t = eps_t + Pi eps_{t-1}, Pi = (0.6^|i-j|), eps MA(1).
inline SimulatedPanel generate_uniform(const SimulationSpec& spec, std::uint64_t seed) {
  if (spec.model != SimModel::Uniform) fail(ErrorKind::InvalidConfig, "generate_uniform needs the uniform model");
  validate(spec);
  Rng rng(seed);
  const Index p = spec.p;
  const Index total = spec.n + spec.burn_in;

  const Matrix loadings = detail::uniform_loadings(rng, p, spec.r0, spec.delta0);
  const Vector phi = detail::two_sided_coefficients(rng, spec.r0, 0.7, 0.95);
  const Matrix factors = detail::ar1_series(rng, total, phi, 1.0);

  const Vector ma = detail::two_sided_coefficients(rng, p, 0.05, 0.15);
  const Matrix eps = detail::ma1_series(rng, total + 1, ma, 1.0);
  Matrix pi(p, p);
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < p; ++j) pi(i, j) = std::pow(0.6, static_cast<double>(std::abs(i - j)));
  const Matrix noise = eps.bottomRows(total) + eps.topRows(total) * pi.transpose();

  Matrix y = factors * loadings.transpose() + spec.noise_scale * noise;
  return {TimePanel(y.bottomRows(spec.n)), detail::left_singular_basis(loadings), Matrix()};
}

// y_t = A~ x~_t + B~ z~_t + e_t with AR(1) strong factors, MA(1) weak
// factors and i.i.d. standard normal idiosyncratic errors.
inline SimulatedPanel generate_two_strength(const SimulationSpec& spec, std::uint64_t seed) {
  if (spec.model != SimModel::TwoStrength) {
    fail(ErrorKind::InvalidConfig, "generate_two_strength needs the two-strength model");
  }
  validate(spec);
  Rng rng(seed);
  const Index p = spec.p;
  const Index total = spec.n + spec.burn_in;
  constexpr double kInnovationSd = 0.2;

  const Matrix a_tilde = detail::uniform_loadings(rng, p, spec.r0, spec.delta0);
  const Matrix b_tilde = detail::uniform_loadings(rng, p, spec.r1, spec.delta1);
  const Vector phi = detail::two_sided_coefficients(rng, spec.r0, 0.85, 0.95);
  const Vector theta = detail::two_sided_coefficients(rng, spec.r1, 0.85, 0.95);
  const Matrix x = detail::ar1_series(rng, total, phi, kInnovationSd);
  const Matrix z = detail::ma1_series(rng, total, theta, kInnovationSd);
  Matrix noise(total, p);
  for (Index j = 0; j < p; ++j)
    for (Index t = 0; t < total; ++t) noise(t, j) = rng.normal();

  Matrix y = x * a_tilde.transpose() + spec.noise_scale * noise;
  if (spec.r1 > 0) y += z * b_tilde.transpose();
  SimulatedPanel out{TimePanel(y.bottomRows(spec.n)), detail::left_singular_basis(a_tilde), Matrix()};
  if (spec.r1 > 0) out.B_true = detail::left_singular_basis(b_tilde);
  return out;
}

inline SimulatedPanel generate(const SimulationSpec& spec, std::uint64_t seed) {
  return spec.model == SimModel::Uniform ? generate_uniform(spec, seed) : generate_two_strength(spec, seed);
}

struct MethodOutcome {
  bool ok = false;
  int r_hat = 0;
  double distance = 0.0;
  std::string error;
};

struct RunRecord {
  int run = 0;
  std::uint64_t seed = 0;
  std::vector<MethodOutcome> outcomes;  // one per method, in spec order
};

struct MethodSummary {
  std::string name;
  int successes = 0;
  int failures = 0;
  int hits = 0;  // runs with r_hat == r0
  double frequency = 0.0;
  double mean_r = 0.0;
  double mean_distance = 0.0;
  double sd_distance = 0.0;
};

struct SimulationReport {
  std::vector<MethodSummary> methods;
  std::vector<RunRecord> runs;
  double wall_seconds = 0.0;

  const MethodSummary& method(const std::string& name) const {
    for (const auto& m : methods)
      if (m.name == name) return m;
    fail(ErrorKind::InvalidConfig, "no method named " + name + " in report");
  }
};

inline RunRecord simulate_run(const SimulationSpec& spec, int run) {
  RunRecord rec;
  rec.run = run;
  rec.seed = mix_seed(spec.base_seed, static_cast<std::uint64_t>(run));
  const SimulatedPanel sim = generate(spec, rec.seed);
  for (const MethodSpec& method : spec.methods) {
    MethodOutcome out;
    try {
      const FactorFit fit = estimate(sim.panel, method.cfg);
      out.r_hat = fit.r_hat;
      out.distance = subspace_distance(fit.A_hat, sim.A_true);
      out.ok = true;
    } catch (const Error& e) {
      out.error = e.what();
    }
    rec.outcomes.push_back(std::move(out));
  }
  return rec;
}

// Runs `count` independent jobs on up to `threads` workers. Results land in
// index order so the outcome never depends on scheduling.
template <typename Job>
auto parallel_map(int count, int threads, Job job) {
  using Result = decltype(job(0));
  std::vector<Result> results(static_cast<std::size_t>(count));
  const int workers = std::max(1, std::min(threads, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) results[static_cast<std::size_t>(i)] = job(i);
    return results;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = next++; i < count; i = next++) results[static_cast<std::size_t>(i)] = job(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

inline int default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

inline SimulationReport summarize(const SimulationSpec& spec, std::vector<RunRecord> runs) {
  SimulationReport report;
  report.runs = std::move(runs);
  for (std::size_t mi = 0; mi < spec.methods.size(); ++mi) {
    MethodSummary s;
    s.name = spec.methods[mi].name;
    double sum_r = 0.0, sum_d = 0.0;
    for (const RunRecord& rec : report.runs) {
      const MethodOutcome& o = rec.outcomes[mi];
      if (!o.ok) {
        ++s.failures;
        continue;
      }
      ++s.successes;
      if (o.r_hat == spec.r0) ++s.hits;
      sum_r += o.r_hat;
      sum_d += o.distance;
    }
    if (s.successes > 0) {
      s.frequency = static_cast<double>(s.hits) / s.successes;
      s.mean_r = sum_r / s.successes;
      s.mean_distance = sum_d / s.successes;
      double ss = 0.0;
      for (const RunRecord& rec : report.runs) {
        const MethodOutcome& o = rec.outcomes[mi];
        if (o.ok) ss += (o.distance - s.mean_distance) * (o.distance - s.mean_distance);
      }
      s.sd_distance = s.successes > 1 ? std::sqrt(ss / (s.successes - 1)) : 0.0;
    }
    report.methods.push_back(std::move(s));
  }
  return report;
}

inline SimulationReport run_monte_carlo(const SimulationSpec& spec) {
  validate(spec);
  const auto start = std::chrono::steady_clock::now();
  auto runs = parallel_map(spec.n_runs, spec.threads, [&](int i) { return simulate_run(spec, i); });
  SimulationReport report = summarize(spec, std::move(runs));
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace wfactor
