// wfactor command-line driver.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "wfactor/estimate.hpp"
#include "wfactor/forecast.hpp"
#include "wfactor/io.hpp"
#include "wfactor/matrix_factor.hpp"
#include "wfactor/model_select.hpp"
#include "wfactor/simulate.hpp"

namespace fs = std::filesystem;
using namespace wfactor;

namespace {

struct Options {
  std::string input;
  std::string out_dir = ".";
  std::string method = "wauto";
  int m = 2;
  std::string q = "auto";
  int q0 = 15;
  double bic_c = 0.2;
  double vartheta_scale = 0.1;
  std::optional<int> r;
  std::optional<int> r_max;
  int h = 1;
  std::optional<long> n1;
  bool no_demean = false;
  bool standardize_per_window = false;
  int threads = default_threads();
  std::uint64_t seed = 7;

  std::string model = "uniform";
  long n = 300;
  long p = 100;
  int r0 = 3;
  int r1 = 0;
  double delta0 = 1.0;
  double delta1 = 1.0;
  int runs = 200;

  std::optional<int> q1, q2, d1, d2;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

std::string join(const std::vector<double>& v, int precision = 4) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt(v[i], precision);
  return s;
}

EstimatorConfig estimator_config(const Options& o) {
  EstimatorConfig cfg;
  cfg.method = parse_method(o.method);
  cfg.m = o.m;
  if (o.q != "auto") {
    try {
      std::size_t used = 0;
      cfg.q = std::stoi(o.q, &used);
      if (used != o.q.size()) throw std::invalid_argument(o.q);
    } catch (const std::exception&) {
      fail(ErrorKind::InvalidConfig, "--q expects an integer or 'auto', got '" + o.q + "'");
    }
  }
  cfg.bic.q0 = o.q0;
  cfg.bic.C = o.bic_c;
  cfg.vartheta_scale = o.vartheta_scale;
  cfg.r_fixed = o.r;
  cfg.r_search_max = o.r_max;
  return cfg;
}

std::string path_in(const Options& o, const std::string& name) { return (fs::path(o.out_dir) / name).string(); }

void emit(const Options& o, const std::string& report, const KeyValueWriter& trace) {
  fs::create_directories(o.out_dir);
  std::ofstream(path_in(o, "report.txt")) << report;
  trace.write(path_in(o, "trace.kv"));
  std::cout << report;
}

std::vector<std::string> factor_header(Index r) {
  std::vector<std::string> h;
  for (Index j = 0; j < r; ++j) h.push_back("f" + std::to_string(j + 1));
  return h;
}

void add_bic_trace(KeyValueWriter& kv, const BicTrace& t) {
  kv.add("bic.C", t.C);
  kv.add("bic.q0", t.q0);
  kv.add("bic.r_bar", t.r_bar);
  kv.add("bic.candidates", t.candidates);
  kv.add("bic.r_hat_per_q", t.r_hat_per_q);
  kv.add("bic.totals", t.totals);
  for (std::size_t k = 0; k < t.per_lag_bic.size(); ++k) {
    std::vector<double> vals, losses;
    for (const BicTerm& term : t.per_lag_bic[k]) {
      vals.push_back(term.bic);
      losses.push_back(term.loss);
    }
    kv.add("bic.lag" + std::to_string(k + 1), vals);
    kv.add("bic.loss.lag" + std::to_string(k + 1), losses);
  }
  kv.add("bic.q_hat", t.q_hat);
}

int run_estimate(const Options& o) {
  const TimePanel panel = ingest_csv(o.input, !o.no_demean);
  const EstimatorConfig cfg = estimator_config(o);
  const FactorFit fit = estimate(panel, cfg);

  KeyValueWriter kv;
  kv.add("command", "estimate");
  kv.add("method", to_string(fit.method));
  kv.add("n", static_cast<long>(panel.n()));
  kv.add("p", static_cast<long>(panel.p()));
  kv.add("m", cfg.m);
  kv.add("r_hat", fit.r_hat);
  if (fit.q_used) kv.add("q_hat", *fit.q_used);
  kv.add("vartheta", fit.vartheta);
  kv.add("ratios", fit.ratios);
  for (std::size_t k = 0; k < fit.eigenvalues_per_lag.size(); ++k) {
    const std::string key = fit.method == Method::Cov ? "eigenvalues" : "eigenvalues.lag" + std::to_string(k + 1);
    kv.add(key, fit.eigenvalues_per_lag[k]);
  }
  if (fit.method == Method::WAuto && !cfg.q) {
    const Matrix y = detail::centered_data(panel);
    detail::LaggedRegression reg(y, sym_eigen(lag_autocov(y, 0), y.cols()));
    add_bic_trace(kv, detail::select_q(reg, cfg.bic, cfg));
  }
  write_csv(path_in(o, "result.csv"), fit.A_hat, factor_header(fit.A_hat.cols()));
  write_csv(path_in(o, "factors.csv"), fit.factors, factor_header(fit.factors.cols()));

  std::ostringstream rep;
  rep << "method  " << to_string(fit.method) << "\n"
      << "panel   n=" << panel.n() << " p=" << panel.p() << "\n"
      << "r_hat   " << fit.r_hat << "\n";
  if (fit.q_used) rep << "q_hat   " << *fit.q_used << "\n";
  if (!fit.ratios.empty()) {
    const std::vector<double> head(fit.ratios.begin(),
                                   fit.ratios.begin() + static_cast<long>(std::min<std::size_t>(fit.ratios.size(), 10)));
    rep << "ratios  " << join(head) << (fit.ratios.size() > 10 ? " ..." : "") << "\n";
  }
  rep << "loadings written to result.csv (" << fit.A_hat.rows() << "x" << fit.A_hat.cols() << ")\n";
  emit(o, rep.str(), kv);
  return 0;
}

int run_select_q(const Options& o) {
  const TimePanel panel = ingest_csv(o.input, !o.no_demean);
  EstimatorConfig cfg = estimator_config(o);
  cfg.method = Method::WAuto;
  const BicTrace t = select_q(panel, cfg.bic, cfg);

  KeyValueWriter kv;
  kv.add("command", "select-q");
  kv.add("n", static_cast<long>(panel.n()));
  kv.add("p", static_cast<long>(panel.p()));
  kv.add("m", cfg.m);
  add_bic_trace(kv, t);

  Matrix table(static_cast<Index>(t.candidates.size()), 3);
  std::ostringstream rep;
  rep << "   q  r_hat        BIC total\n";
  for (std::size_t i = 0; i < t.candidates.size(); ++i) {
    table(static_cast<Index>(i), 0) = t.candidates[i];
    table(static_cast<Index>(i), 1) = t.r_hat_per_q[i];
    table(static_cast<Index>(i), 2) = t.totals[i];
    rep << std::setw(4) << t.candidates[i] << std::setw(7) << t.r_hat_per_q[i] << std::setw(17) << fmt(t.totals[i], 2)
        << (t.candidates[i] == t.q_hat ? "  *" : "") << "\n";
  }
  rep << "q_hat = " << t.q_hat << " (r_bar = " << t.r_bar << ")\n";
  write_csv(path_in(o, "result.csv"), table, {"q", "r_hat", "bic_total"});
  emit(o, rep.str(), kv);
  return 0;
}

int run_simulate(const Options& o) {
  SimulationSpec spec;
  if (o.model == "uniform") {
    spec.model = SimModel::Uniform;
  } else if (o.model == "two-strength") {
    spec.model = SimModel::TwoStrength;
  } else {
    fail(ErrorKind::InvalidConfig, "--model must be 'uniform' or 'two-strength'");
  }
  spec.n = o.n;
  spec.p = o.p;
  spec.r0 = o.r0;
  spec.r1 = o.r1;
  spec.delta0 = o.delta0;
  spec.delta1 = o.delta1;
  spec.n_runs = o.runs;
  spec.base_seed = o.seed;
  spec.threads = o.threads;
  spec.methods = default_methods(o.m);
  for (auto& method : spec.methods) {
    method.cfg.vartheta_scale = o.vartheta_scale;
    method.cfg.bic.C = o.bic_c;
    method.cfg.bic.q0 = o.q0;
  }
  const SimulationReport report = run_monte_carlo(spec);

  KeyValueWriter kv;
  kv.add("command", "simulate");
  kv.add("model", to_string(spec.model));
  kv.add("n", static_cast<long>(spec.n));
  kv.add("p", static_cast<long>(spec.p));
  kv.add("r0", spec.r0);
  kv.add("r1", spec.r1);
  kv.add("delta0", spec.delta0);
  kv.add("delta1", spec.delta1);
  kv.add("runs", spec.n_runs);
  kv.add("seed", std::to_string(spec.base_seed));
  kv.add("rng", Rng::kName);
  std::ostringstream rep;
  rep << "model " << to_string(spec.model) << ", n=" << spec.n << ", p=" << spec.p << ", r0=" << spec.r0;
  if (spec.model == SimModel::TwoStrength) rep << ", r1=" << spec.r1 << ", delta1=" << spec.delta1;
  rep << ", delta0=" << spec.delta0 << ", runs=" << spec.n_runs << ", seed=" << spec.base_seed << "\n\n";
  rep << "method   freq(r_hat=r0)  mean r_hat  mean D    sd D     failures\n";
  for (const MethodSummary& s : report.methods) {
    kv.add(s.name + ".frequency", s.frequency);
    kv.add(s.name + ".mean_r", s.mean_r);
    kv.add(s.name + ".mean_distance", s.mean_distance);
    kv.add(s.name + ".sd_distance", s.sd_distance);
    kv.add(s.name + ".failures", s.failures);
    rep << std::left << std::setw(9) << s.name << std::right << std::setw(14) << fmt(s.frequency, 3) << std::setw(12)
        << fmt(s.mean_r, 3) << std::setw(9) << fmt(s.mean_distance, 3) << std::setw(9) << fmt(s.sd_distance, 3)
        << std::setw(10) << s.failures << "\n";
  }

  fs::create_directories(o.out_dir);
  std::ofstream csv(path_in(o, "result.csv"));
  csv << "run,seed,method,ok,r_hat,distance\n";
  for (const RunRecord& rec : report.runs) {
    for (std::size_t mi = 0; mi < rec.outcomes.size(); ++mi) {
      const MethodOutcome& out = rec.outcomes[mi];
      csv << rec.run << ',' << rec.seed << ',' << spec.methods[mi].name << ',' << (out.ok ? 1 : 0) << ',' << out.r_hat
          << ',' << format_double(out.distance) << '\n';
    }
  }
  emit(o, rep.str(), kv);
  return 0;
}

int run_forecast(const Options& o) {
  const TimePanel panel = ingest_csv(o.input, !o.no_demean);
  const EstimatorConfig base = estimator_config(o);
  const int r_hat = o.r.value_or(1);
  const Index n1 = o.n1 ? static_cast<Index>(*o.n1) : panel.n() - 50;
  std::vector<MethodSpec> methods = default_methods(o.m);
  for (auto& method : methods) {
    const Method kind = method.cfg.method;
    method.cfg = base;
    method.cfg.method = kind;
    method.cfg.r_fixed.reset();
    if (kind != Method::WAuto) method.cfg.q.reset();
  }
  ForecastOptions fo;
  fo.standardize_per_window = o.standardize_per_window;
  fo.threads = o.threads;
  const ForecastReport report = expanding_window_eval(panel, methods, r_hat, o.h, n1, fo);

  KeyValueWriter kv;
  kv.add("command", "forecast");
  kv.add("h", report.h);
  kv.add("r_hat", report.r_hat);
  kv.add("n1", static_cast<long>(report.n1));
  kv.add("n2", static_cast<long>(report.n2));
  kv.add("windows", static_cast<long>(report.windows()));
  kv.add("standardization", o.standardize_per_window ? "per-window" : "global");
  std::ostringstream rep;
  rep << "h=" << report.h << ", r_hat=" << report.r_hat << ", n1=" << report.n1 << ", n2=" << report.n2
      << ", windows=" << report.windows() << "\n\n";
  rep << "          Cov      Auto     WAuto    Zero\n";
  std::vector<double> mafe, msfe;
  Matrix table(4, 3);
  for (std::size_t i = 0; i < report.methods.size(); ++i) {
    const MethodForecast& mf = report.methods[i];
    mafe.push_back(mf.mafe);
    msfe.push_back(mf.msfe);
    kv.add(mf.name + ".mafe", mf.mafe);
    kv.add(mf.name + ".msfe", mf.msfe);
    kv.add(mf.name + ".failed_windows", mf.failed_windows);
    table.row(static_cast<Index>(i)) << mf.mafe, mf.msfe, mf.failed_windows;
    write_csv(path_in(o, "predictions_" + mf.name + ".csv"), mf.predictions, panel.names());
  }
  mafe.push_back(report.zero_forecast.mafe);
  msfe.push_back(report.zero_forecast.msfe);
  table.row(3) << report.zero_forecast.mafe, report.zero_forecast.msfe, 0;
  kv.add("Zero.mafe", report.zero_forecast.mafe);
  kv.add("Zero.msfe", report.zero_forecast.msfe);
  rep << "MAFE  ";
  for (double v : mafe) rep << std::setw(9) << fmt(v, 3);
  rep << "\nMSFE  ";
  for (double v : msfe) rep << std::setw(9) << fmt(v, 3);
  rep << "\n";
  write_csv(path_in(o, "result.csv"), table, {"mafe", "msfe", "failed_windows"});
  emit(o, rep.str(), kv);
  return 0;
}

int run_matrix_estimate(const Options& o) {
  const MatrixPanel panel = ingest_matrix_csv(o.input);
  MatrixEstimatorConfig cfg;
  cfg.m = o.m;
  cfg.q1 = o.q1;
  cfg.q2 = o.q2;
  cfg.d1 = o.d1;
  cfg.d2 = o.d2;
  cfg.vartheta_scale = o.vartheta_scale;
  const MatrixFactorFit fit = estimate_matrix(panel, cfg);

  KeyValueWriter kv;
  kv.add("command", "matrix-estimate");
  kv.add("n", static_cast<long>(panel.n()));
  kv.add("p1", static_cast<long>(panel.p1()));
  kv.add("p2", static_cast<long>(panel.p2()));
  kv.add("q1", fit.q1);
  kv.add("q2", fit.q2);
  kv.add("d1", fit.d1);
  kv.add("d2", fit.d2);
  kv.add("ratios.rows", fit.ratios_rows);
  kv.add("ratios.cols", fit.ratios_cols);
  kv.add("spectrum.rows", fit.spectrum_rows);
  kv.add("spectrum.cols", fit.spectrum_cols);
  write_csv(path_in(o, "result.csv"), fit.R_hat, factor_header(fit.R_hat.cols()));
  write_csv(path_in(o, "column_loadings.csv"), fit.C_hat, factor_header(fit.C_hat.cols()));
  std::ostringstream rep;
  rep << "panel  n=" << panel.n() << " p1=" << panel.p1() << " p2=" << panel.p2() << "\n"
      << "rows   d1=" << fit.d1 << " (q1=" << fit.q1 << ")\n"
      << "cols   d2=" << fit.d2 << " (q2=" << fit.q2 << ")\n"
      << "row loadings in result.csv, column loadings in column_loadings.csv\n";
  emit(o, rep.str(), kv);
  return 0;
}

void add_estimator_flags(CLI::App* sub, Options& o) {
  sub->add_option("--method", o.method, "cov, auto or wauto")->capture_default_str();
  sub->add_option("--m", o.m, "maximum lag")->capture_default_str();
  sub->add_option("--q", o.q, "projection dimension or 'auto'")->capture_default_str();
  sub->add_option("--q0", o.q0, "upper end of the q search")->capture_default_str();
  sub->add_option("--bic-c", o.bic_c, "BIC penalty constant")->capture_default_str();
  sub->add_option("--vartheta-scale", o.vartheta_scale, "ratio correction scale")->capture_default_str();
  sub->add_option("--r", o.r, "fixed number of factors");
  sub->add_option("--r-max", o.r_max, "largest factor count searched");
  sub->add_flag("--no-demean", o.no_demean, "keep the raw column means");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Factor estimation for high-dimensional time series"};
  app.set_config("--config", "", "configuration file (TOML or INI); flags override it");
  app.require_subcommand(1);
  app.set_help_flag("--help", "print this help message and exit");
  Options o;
  app.add_option("--out", o.out_dir, "output directory")->capture_default_str();
  app.add_option("--threads", o.threads, "worker threads")->capture_default_str();
  app.add_option("--seed", o.seed, "base seed")->capture_default_str();

  auto* est = app.add_subcommand("estimate", "estimate loadings and the number of factors");
  est->add_option("input", o.input, "CSV panel")->required();
  add_estimator_flags(est, o);

  auto* sq = app.add_subcommand("select-q", "generalized BIC trace for q");
  sq->add_option("input", o.input, "CSV panel")->required();
  add_estimator_flags(sq, o);

  auto* sim = app.add_subcommand("simulate", "Monte Carlo study");
  sim->add_option("--model", o.model, "uniform or two-strength")->capture_default_str();
  sim->add_option("--n", o.n)->capture_default_str();
  sim->add_option("--p", o.p)->capture_default_str();
  sim->add_option("--r0", o.r0)->capture_default_str();
  sim->add_option("--r1", o.r1)->capture_default_str();
  sim->add_option("--delta0", o.delta0)->capture_default_str();
  sim->add_option("--delta1", o.delta1)->capture_default_str();
  sim->add_option("--runs", o.runs)->capture_default_str();
  sim->add_option("--m", o.m)->capture_default_str();
  sim->add_option("--q0", o.q0)->capture_default_str();
  sim->add_option("--bic-c", o.bic_c)->capture_default_str();
  sim->add_option("--vartheta-scale", o.vartheta_scale)->capture_default_str();
  sim->add_option("--seed", o.seed, "base seed")->capture_default_str();
  sim->add_option("--threads", o.threads, "worker threads")->capture_default_str();

  auto* fc = app.add_subcommand("forecast", "expanding-window factor forecasts");
  fc->add_option("input", o.input, "standardized CSV panel")->required();
  add_estimator_flags(fc, o);
  fc->add_option("--h", o.h, "forecast horizon")->capture_default_str();
  fc->add_option("--n1", o.n1, "initial training size (default n - 50)");
  fc->add_flag("--standardize-per-window", o.standardize_per_window, "standardize with training-window statistics");
  fc->add_option("--threads", o.threads, "worker threads")->capture_default_str();

  auto* mat = app.add_subcommand("matrix-estimate", "row and column loadings of a matrix panel");
  mat->add_option("input", o.input, "stacked matrix CSV")->required();
  mat->add_option("--m", o.m)->capture_default_str();
  mat->add_option("--q1", o.q1);
  mat->add_option("--q2", o.q2);
  mat->add_option("--d1", o.d1);
  mat->add_option("--d2", o.d2);
  mat->add_option("--vartheta-scale", o.vartheta_scale)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (est->parsed()) return run_estimate(o);
    if (sq->parsed()) return run_select_q(o);
    if (sim->parsed()) return run_simulate(o);
    if (fc->parsed()) return run_forecast(o);
    if (mat->parsed()) return run_matrix_estimate(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
