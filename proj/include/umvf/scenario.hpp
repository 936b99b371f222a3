#pragma once

// Scenario execution: simulate truth, run the filter, compute metrics and
// write the run artifacts.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <thread>
#include <vector>

#include "umvf/filter.hpp"
#include "umvf/io/config.hpp"
#include "umvf/io/csv.hpp"
#include "umvf/io/svg.hpp"
#include "umvf/simulator.hpp"

namespace umvf {

struct FaultWindowStats {
  io::Window window;
  double bias = 0.0;     // mean(f_hat - f_true) over the window
  double mean_Pf = 0.0;  // mean of the matching diagonal entry of P_f
};

struct RunMetrics {
  Vector rmse_x;
  Vector rmse_f;
  double mean_res_M11 = 0.0;
  double mean_res_M21 = 0.0;
  double final_trace_Px = 0.0;
  double final_trace_Pf = 0.0;
  std::vector<FaultWindowStats> windows;  // one per fault channel when configured
};

inline RunMetrics compute_metrics(const std::vector<TruthRecord>& truth, const std::vector<StepRecord>& est,
                                  const std::vector<io::Window>& windows = {}) {
  if (truth.size() != est.size() || truth.empty()) {
    throw Error(ErrorKind::LengthMismatch, "truth and estimate sequences must be non-empty and of equal length");
  }
  const auto N = static_cast<double>(truth.size());
  const Eigen::Index n = truth.front().x_true.size(), p = truth.front().f_true.size();
  RunMetrics m;
  m.rmse_x = Vector::Zero(n);
  m.rmse_f = Vector::Zero(p);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    m.rmse_x += (truth[i].x_true - est[i].x_post).array().square().matrix();
    m.rmse_f += (truth[i].f_true - est[i].f_tracked).array().square().matrix();
    m.mean_res_M11 += est[i].res_M11 / N;
    m.mean_res_M21 += est[i].res_M21 / N;
  }
  m.rmse_x = (m.rmse_x / N).cwiseSqrt();
  m.rmse_f = (m.rmse_f / N).cwiseSqrt();
  m.final_trace_Px = est.back().trace_Px;
  m.final_trace_Pf = est.back().trace_Pf;

  if (!windows.empty() && static_cast<Eigen::Index>(windows.size()) != p) {
    throw Error(ErrorKind::LengthMismatch, "need one steady window per fault channel");
  }
  for (std::size_t j = 0; j < windows.size(); ++j) {
    const io::Window& w = windows[j];
    if (w.end >= static_cast<long>(truth.size())) throw Error(ErrorKind::Config, "fault window exceeds the horizon");
    FaultWindowStats st{w, 0.0, 0.0};
    const auto c = static_cast<Eigen::Index>(j);
    const auto len = static_cast<double>(w.end - w.begin + 1);
    for (long k = w.begin; k <= w.end; ++k) {
      const auto i = static_cast<std::size_t>(k);
      st.bias += (est[i].f_tracked(c) - truth[i].f_true(c)) / len;
      st.mean_Pf += est[i].P_f_tracked(c, c) / len;
    }
    m.windows.push_back(st);
  }
  return m;
}

inline std::string metrics_text(const RunMetrics& m) {
  using io::format_double;
  std::string s;
  for (Eigen::Index i = 0; i < m.rmse_x.size(); ++i) {
    s += "rmse_x_" + std::to_string(i + 1) + " = " + format_double(m.rmse_x(i)) + "\n";
  }
  for (Eigen::Index i = 0; i < m.rmse_f.size(); ++i) {
    s += "rmse_f_" + std::to_string(i + 1) + " = " + format_double(m.rmse_f(i)) + "\n";
  }
  s += "mean_res_M11 = " + format_double(m.mean_res_M11) + "\n";
  s += "mean_res_M21 = " + format_double(m.mean_res_M21) + "\n";
  s += "final_trace_Px = " + format_double(m.final_trace_Px) + "\n";
  s += "final_trace_Pf = " + format_double(m.final_trace_Pf) + "\n";
  for (std::size_t j = 0; j < m.windows.size(); ++j) {
    const auto& w = m.windows[j];
    const std::string tag = "fault_" + std::to_string(j + 1);
    s += tag + "_window = " + std::to_string(w.window.begin) + ":" + std::to_string(w.window.end) + "\n";
    s += tag + "_bias = " + format_double(w.bias) + "\n";
    s += tag + "_mean_Pf = " + format_double(w.mean_Pf) + "\n";
  }
  return s;
}

/// Largest absolute difference between two filter runs over estimates and
/// covariance blocks.
inline double max_deviation(const std::vector<StepRecord>& a, const std::vector<StepRecord>& b) {
  if (a.size() != b.size()) throw Error(ErrorKind::LengthMismatch, "runs differ in length");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d = std::max({d, max_abs(a[i].x_post - b[i].x_post), max_abs(a[i].f_hat - b[i].f_hat),
                  max_abs(a[i].f_tracked - b[i].f_tracked), max_abs(a[i].P_x - b[i].P_x),
                  max_abs(a[i].P_f - b[i].P_f), max_abs(a[i].P_xf - b[i].P_xf),
                  max_abs(a[i].P_f_tracked - b[i].P_f_tracked)});
  }
  return d;
}

struct RunArtifacts {
  ValidationReport validation;
  std::vector<TruthRecord> truth;
  std::vector<StepRecord> records;                   // primary mode (sqrt unless mode = covariance)
  std::optional<std::vector<StepRecord>> alternate;  // covariance mode when mode = both
  std::optional<double> max_path_deviation;
  RunMetrics metrics;
  std::vector<std::filesystem::path> files;
};

inline std::vector<Vector> measurements_of(const std::vector<TruthRecord>& truth) {
  std::vector<Vector> ys;
  ys.reserve(truth.size());
  for (const auto& t : truth) ys.push_back(t.y);
  return ys;
}

inline std::vector<Vector> inputs_of(const std::vector<TruthRecord>& truth) {
  std::vector<Vector> us;
  us.reserve(truth.size());
  for (const auto& t : truth) us.push_back(t.u);
  return us;
}

inline std::uint64_t resolve_seed(const io::ScenarioConfig& cfg) { return cfg.run.seed.value_or(1); }

namespace detail {

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  return colors[i % 6];
}

inline std::filesystem::path write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Config, "cannot write " + path.string());
  out << text;
  return path;
}

inline std::vector<std::filesystem::path> write_plots(const std::filesystem::path& dir,
                                                      const std::vector<TruthRecord>& truth,
                                                      const std::vector<StepRecord>& est) {
  std::vector<std::filesystem::path> files;
  std::vector<double> ks;
  for (const auto& t : truth) ks.push_back(static_cast<double>(t.k));
  auto column = [&](auto getter) {
    std::vector<double> v;
    for (std::size_t i = 0; i < truth.size(); ++i) v.push_back(getter(i));
    return v;
  };

  const Eigen::Index n = truth.front().x_true.size(), p = truth.front().f_true.size();
  for (Eigen::Index j = 0; j < n; ++j) {
    io::LinePlot plot;
    plot.title = "State x" + std::to_string(j + 1) + ": actual and estimated";
    plot.y_label = "x" + std::to_string(j + 1);
    plot.series.push_back({"actual", ks, column([&](std::size_t i) { return truth[i].x_true(j); }), palette(0), false});
    plot.series.push_back({"estimate", ks, column([&](std::size_t i) { return est[i].x_post(j); }), palette(1), true});
    files.push_back(write_text(dir / ("state_" + std::to_string(j + 1) + ".svg"), io::render_svg(plot)));
  }
  for (Eigen::Index j = 0; j < p; ++j) {
    io::LinePlot plot;
    plot.title = "Fault f" + std::to_string(j + 1) + ": actual and estimated";
    plot.y_label = "f" + std::to_string(j + 1);
    plot.series.push_back({"actual", ks, column([&](std::size_t i) { return truth[i].f_true(j); }), palette(0), false});
    plot.series.push_back({"estimate", ks, column([&](std::size_t i) { return est[i].f_tracked(j); }), palette(1), true});
    files.push_back(write_text(dir / ("fault_" + std::to_string(j + 1) + ".svg"), io::render_svg(plot)));
  }
  io::LinePlot tr;
  tr.title = "Covariance traces";
  tr.y_label = "trace";
  tr.series.push_back({"trace(P_x)", ks, column([&](std::size_t i) { return est[i].trace_Px; }), palette(2), false});
  tr.series.push_back({"trace(P_f)", ks, column([&](std::size_t i) { return est[i].trace_Pf; }), palette(3), true});
  files.push_back(write_text(dir / "covariance_trace.svg", io::render_svg(tr)));
  return files;
}

}  // namespace detail

/// Simulates the configured scenario, filters it in the requested mode(s)
/// and, when `write_files` is set, writes trajectory.csv, metrics.txt and
/// the SVG plots into cfg.output.directory.
inline RunArtifacts execute(const io::ScenarioConfig& cfg, bool write_files = true) {
  RunArtifacts art;
  const SystemModel model = cfg.model();
  art.validation = validate_scenario(model, cfg.init);

  art.truth = simulate(model, cfg.truth, cfg.run.horizon, resolve_seed(cfg));
  const auto ys = measurements_of(art.truth);
  const auto us = inputs_of(art.truth);

  const CovarianceMode primary =
      cfg.run.mode == io::RunMode::covariance ? CovarianceMode::covariance : CovarianceMode::sqrt;
  art.records = run_filter(model, cfg.init, ys, us, cfg.filter_options(primary));
  if (cfg.run.mode == io::RunMode::both) {
    art.alternate = run_filter(model, cfg.init, ys, us, cfg.filter_options(CovarianceMode::covariance));
    art.max_path_deviation = max_deviation(art.records, *art.alternate);
  }
  art.metrics = compute_metrics(art.truth, art.records, cfg.run.fault_windows);

  if (!write_files) return art;
  const auto& dir = cfg.output.directory;
  std::filesystem::create_directories(dir);
  if (cfg.output.emit_csv) {
    std::ofstream out(dir / "trajectory.csv");
    if (!out) throw Error(ErrorKind::Config, "cannot write " + (dir / "trajectory.csv").string());
    io::write_trajectory_csv(out, cfg.dims, io::make_rows(art.truth, art.records));
    art.files.push_back(dir / "trajectory.csv");
  }
  if (cfg.output.emit_metrics) {
    std::string text = "mode = " + std::string(io::to_string(cfg.run.mode)) + "\n";
    text += "path = " + std::string(to_string(art.records.front().path)) + "\n";
    text += "seed = " + std::to_string(resolve_seed(cfg)) + "\n";
    text += metrics_text(art.metrics);
    if (art.max_path_deviation) text += "max_path_deviation = " + io::format_double(*art.max_path_deviation) + "\n";
    art.files.push_back(detail::write_text(dir / "metrics.txt", text));
  }
  if (cfg.output.emit_svg) {
    for (auto& f : detail::write_plots(dir, art.truth, art.records)) art.files.push_back(std::move(f));
  }
  return art;
}

struct WindowCheck {
  Eigen::Index channel = 0;
  io::Window window;
  double worst_z = 0.0;  // max_k |mean error| / (sd / sqrt(M))
  bool passed = false;
};

/// Per-step Monte Carlo statistics of the estimation errors
/// x_true - x_hat and f_true - f_hat. Rows are steps.
struct MonteCarloResult {
  long runs = 0;
  Matrix mean_x_err, sd_x_err;
  Matrix mean_f_err, sd_f_err;
  std::vector<WindowCheck> checks;
};

/// Runs `runs` independent simulations, run i with seed base_seed + i.
/// Results do not depend on the thread count.
inline MonteCarloResult run_montecarlo(const io::ScenarioConfig& cfg, long runs, std::uint64_t base_seed,
                                       unsigned threads = 0, double z_bound = 4.0) {
  if (runs < 2) throw Error(ErrorKind::Config, "montecarlo needs at least 2 runs");
  const SystemModel model = cfg.model();
  validate_scenario(model, cfg.init);
  const long N = cfg.run.horizon;
  const Eigen::Index n = cfg.dims.n, p = cfg.dims.p;
  const CovarianceMode mode = cfg.run.mode == io::RunMode::covariance ? CovarianceMode::covariance : CovarianceMode::sqrt;

  // errors[i] is N x (n + p)
  std::vector<Matrix> errors(static_cast<std::size_t>(runs));
  std::vector<std::optional<Error>> failures(static_cast<std::size_t>(runs));
  auto work = [&](long i) {
    try {
      const auto truth = simulate(model, cfg.truth, N, base_seed + static_cast<std::uint64_t>(i));
      const auto est = run_filter(model, cfg.init, measurements_of(truth), inputs_of(truth), cfg.filter_options(mode));
      Matrix e(N, n + p);
      for (long k = 0; k < N; ++k) {
        const auto s = static_cast<std::size_t>(k);
        e.row(k).head(n) = (truth[s].x_true - est[s].x_post).transpose();
        e.row(k).tail(p) = (truth[s].f_true - est[s].f_tracked).transpose();
      }
      errors[static_cast<std::size_t>(i)] = std::move(e);
    } catch (const Error& err) {
      failures[static_cast<std::size_t>(i)] = err;
    }
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<long>(threads, runs));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (long i = t; i < runs; i += threads) work(i);
      });
    }
  }
  for (const auto& f : failures) {
    if (f) throw *f;
  }

  Matrix sum = Matrix::Zero(N, n + p);
  for (const auto& e : errors) sum += e;
  const Matrix mean = sum / static_cast<double>(runs);
  Matrix ss = Matrix::Zero(N, n + p);
  for (const auto& e : errors) ss += (e - mean).array().square().matrix();
  const Matrix sd = (ss / static_cast<double>(runs - 1)).cwiseSqrt();

  MonteCarloResult out;
  out.runs = runs;
  out.mean_x_err = mean.leftCols(n);
  out.sd_x_err = sd.leftCols(n);
  out.mean_f_err = mean.rightCols(p);
  out.sd_f_err = sd.rightCols(p);

  const double root = std::sqrt(static_cast<double>(runs));
  for (std::size_t j = 0; j < cfg.run.fault_windows.size(); ++j) {
    WindowCheck c;
    c.channel = static_cast<Eigen::Index>(j);
    c.window = cfg.run.fault_windows[j];
    c.passed = true;
    for (long k = c.window.begin; k <= std::min(c.window.end, N - 1); ++k) {
      const double mu = std::abs(out.mean_f_err(k, c.channel));
      const double se = out.sd_f_err(k, c.channel) / root;
      const double z = se > 0.0 ? mu / se : (mu == 0.0 ? 0.0 : INFINITY);
      c.worst_z = std::max(c.worst_z, z);
      if (mu > z_bound * se) c.passed = false;
    }
    out.checks.push_back(c);
  }
  return out;
}

inline void write_montecarlo_csv(std::ostream& out, const MonteCarloResult& r) {
  const Eigen::Index n = r.mean_x_err.cols(), p = r.mean_f_err.cols();
  out << "k";
  for (const char* name : {"mean_xerr", "sd_xerr"}) {
    for (Eigen::Index i = 1; i <= n; ++i) out << ',' << name << '_' << i;
  }
  for (const char* name : {"mean_ferr", "sd_ferr"}) {
    for (Eigen::Index i = 1; i <= p; ++i) out << ',' << name << '_' << i;
  }
  out << '\n';
  for (Eigen::Index k = 0; k < r.mean_x_err.rows(); ++k) {
    out << k;
    for (const Matrix* m : {&r.mean_x_err, &r.sd_x_err, &r.mean_f_err, &r.sd_f_err}) {
      for (Eigen::Index i = 0; i < m->cols(); ++i) out << ',' << io::format_double((*m)(k, i));
    }
    out << '\n';
  }
}

}  // namespace umvf
