// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "test_support.hpp"
#include "umvf/oracle.hpp"
#include "umvf/scenario.hpp"

namespace {

using namespace umvf;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<Vector> ys_of(const std::vector<TruthRecord>& t) { return measurements_of(t); }
std::vector<Vector> us_of(const std::vector<TruthRecord>& t) { return inputs_of(t); }

double min_eig_ratio(const Matrix& M) {
  const Matrix S = symmetrize(M);
  return min_eigenvalue(S) / std::max(S.trace(), 1e-300);
}

Outcome fault_tracking() {
  const auto cfg = test::flight_config();
  const auto t0 = std::chrono::steady_clock::now();
  const auto mc = run_montecarlo(cfg, 500, resolve_seed(cfg));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool ok = secs < 30.0 && mc.checks.size() == 2;
  std::string d = "M=500, " + fmt("%.2f", secs) + " s";
  for (const auto& c : mc.checks) {
    ok = ok && c.passed;
    d += ", f" + std::to_string(c.channel + 1) + " worst |mean err|/(sd/sqrt M) = " + fmt("%.2f", c.worst_z);
  }
  return {ok, d};
}

Outcome covariance_convergence() {
  const auto art = execute(test::flight_config(), false);
  double worst_x = 0.0, worst_f = 0.0, worst_core = 0.0;
  for (std::size_t k = 51; k < art.records.size(); ++k) {
    worst_x = std::max(worst_x, std::abs(art.records[k].trace_Px - art.records[k - 1].trace_Px));
    worst_f = std::max(worst_f, std::abs(art.records[k].trace_Pf - art.records[k - 1].trace_Pf));
    worst_core = std::max(worst_core, std::abs(art.records[k].P_f.trace() - art.records[k - 1].P_f.trace()));
  }
  const bool ok = worst_x < 1e-8 && worst_f < 1e-8 && worst_core < 1e-8;
  return {ok, "max step change for k>50: trace(P_x) " + fmt("%.2e", worst_x) + ", trace(P_f) " + fmt("%.2e", worst_f) +
                  " (final " + fmt("%.6f", art.records.back().trace_Px) + ", " +
                  fmt("%.6f", art.records.back().trace_Pf) + ")"};
}

Outcome disturbance_decoupling() {
  const auto cfg = test::flight_config();
  auto quiet = cfg;
  quiet.truth.disturbance.mode = DisturbanceSpec::Mode::none;
  const auto a = execute(cfg, false), b = execute(quiet, false);
  double worst = 0.0, dmax = 0.0;
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    const Vector ex = (a.truth[k].x_true - a.records[k].x_post) - (b.truth[k].x_true - b.records[k].x_post);
    const Vector ef = (a.truth[k].f_true - a.records[k].f_tracked) - (b.truth[k].f_true - b.records[k].f_tracked);
    const Vector ec = (a.truth[k].f_true - a.records[k].f_hat) - (b.truth[k].f_true - b.records[k].f_hat);
    worst = std::max({worst, max_abs(ex), max_abs(ef), max_abs(ec)});
    dmax = std::max(dmax, max_abs(a.truth[k].d_true));
  }
  return {worst <= 1e-8 && dmax > 0.1,
          "max |error difference| = " + fmt("%.2e", worst) + " with max |d| = " + fmt("%.3f", dmax)};
}

Outcome constraint_satisfaction() {
  double worst = 0.0;
  auto scan = [&](const std::vector<StepRecord>& rec) {
    for (const auto& r : rec) worst = std::max({worst, r.res_M11, r.res_M21});
  };
  scan(execute(test::flight_config(), false).records);
  std::mt19937_64 rng(4004);
  for (int i = 0; i < 50; ++i) {
    const auto kind = i % 2 == 0 ? test::ModelKind::full_rank : test::ModelKind::extended;
    const auto sc = test::random_scenario(rng, kind, 60);
    const auto truth = simulate(sc.model(), sc.truth, 60, static_cast<std::uint64_t>(i) + 1);
    scan(run_filter(sc.model(), sc.init, ys_of(truth), us_of(truth)));
  }
  return {worst <= 1e-9, "flight.cfg + 50 random models, max residual = " + fmt("%.2e", worst)};
}

Outcome oracle_equivalence() {
  std::mt19937_64 rng(5005);
  double worst_f = 0.0, worst_m = 0.0;
  for (int i = 0; i < 200; ++i) {
    const auto sc = test::random_scenario(rng, test::ModelKind::full_rank);
    const auto model = sc.model();
    const auto truth = simulate(model, sc.truth, 40, static_cast<std::uint64_t>(i) + 1);
    const long k = test::pick(rng, 1, 39);
    const FilterState s = test::state_before(model, sc.init, truth, k);
    UpdateDetail det;
    const FilterState post = measurement_update(s, truth[static_cast<std::size_t>(k)].y, sc.bundle, {}, &det);
    const auto wls = oracle::whitened_ls_fault(det.innovation, det.blocks.E, det.gains.H, sc.dims.p);
    const Matrix M21 = oracle::kkt_state_gain(det.gains.H, det.blocks.E, sc.bundle.C * s.P_prior, det.blocks.Gamma);
    worst_f = std::max(worst_f, max_abs(post.f_hat - wls.f_hat));
    worst_m = std::max(worst_m, max_abs(det.gains.M21 - M21));
  }

  double worst_k = 0.0;
  for (int i = 0; i < 5; ++i) {
    const auto sc = test::random_scenario(rng, test::ModelKind::kalman, 200);
    const auto truth = simulate(sc.model(), sc.truth, 200, 77);
    const auto ref = oracle::kalman_reference(sc.model(), sc.init, ys_of(truth), us_of(truth));
    for (auto mode : {CovarianceMode::sqrt, CovarianceMode::covariance}) {
      FilterOptions opt;
      opt.mode = mode;
      const auto rec = run_filter(sc.model(), sc.init, ys_of(truth), us_of(truth), opt);
      for (std::size_t k = 0; k < rec.size(); ++k) {
        worst_k = std::max({worst_k, max_abs(rec[k].x_post - ref.x_post[k]), max_abs(rec[k].P_x - ref.P_post[k])});
      }
    }
  }
  const bool ok = worst_f <= 1e-10 && worst_m <= 1e-10 && worst_k <= 1e-12;
  return {ok, "200 steps: max |f - wls| = " + fmt("%.2e", worst_f) + ", max |M21 - kkt| = " + fmt("%.2e", worst_m) +
                  "; Kalman 200 steps: " + fmt("%.2e", worst_k)};
}

Outcome optimality() {
  std::mt19937_64 rng(6006);
  double worst = INFINITY;
  int steps = 0, checks = 0;
  for (int i = 0; steps < 50; ++i) {
    const auto kind = i % 2 == 0 ? test::ModelKind::full_rank : test::ModelKind::extended;
    const auto sc = test::random_scenario(rng, kind);
    const auto model = sc.model();
    const auto truth = simulate(model, sc.truth, 40, static_cast<std::uint64_t>(i) + 1);
    const long k = test::pick(rng, 1, 39);
    const FilterState s = test::state_before(model, sc.init, truth, k);
    UpdateDetail det;
    measurement_update(s, truth[static_cast<std::size_t>(k)].y, sc.bundle, {}, &det);
    // No feasible perturbation exists when E has full row rank.
    const Matrix N = test::left_null_basis(det.blocks.E);
    if (N.cols() == 0) continue;
    ++steps;
    const Matrix& C = sc.bundle.C;
    const Matrix& R = sc.bundle.R;
    const Eigen::Index n = sc.dims.n;
    auto cost = [&](const Matrix& M) {
      const Matrix I = Matrix::Identity(n, n);
      return ((I - M * C) * s.P_prior * (I - M * C).transpose() + M * R * M.transpose()).trace();
    };
    const double base = cost(det.gains.M21);
    for (int j = 0; j < 20; ++j) {
      Matrix D = test::random_matrix(rng, n, N.cols()) * N.transpose();
      D /= D.norm();
      for (double eps : {1e-3, -1e-3, 1e-2, -1e-2}) {
        worst = std::min(worst, cost(det.gains.M21 + eps * D) - base);
        ++checks;
      }
    }
  }
  return {worst >= -1e-12 && checks > 0, std::to_string(steps) + " steps, " + std::to_string(checks) +
                                             " feasible perturbations, min trace increase = " + fmt("%.3e", worst)};
}

Outcome path_equivalence() {
  auto cfg = test::flight_config();
  cfg.run.mode = io::RunMode::both;
  const double dev = *execute(cfg, false).max_path_deviation;

  auto stress = test::flight_config();
  stress.bundle.R *= 1e-6;
  stress.run.horizon = 10000;
  stress.run.mode = io::RunMode::sqrt;
  const auto art = execute(stress, false);
  double worst = INFINITY;
  for (const auto& r : art.records) {
    Matrix J(5, 5);
    J << r.P_x, r.P_xf, r.P_xf.transpose(), r.P_f;
    worst = std::min({worst, min_eig_ratio(r.P_x), min_eig_ratio(r.P_f), min_eig_ratio(r.P_f_tracked),
                      min_eig_ratio(J)});
  }
  const bool ok = dev <= 1e-8 && worst >= -1e-9 && art.records.size() == 10000;
  return {ok, "mode=both max deviation = " + fmt("%.2e", dev) + "; R*1e-6 over 10^4 steps, min eig/trace = " +
                  fmt("%.2e", worst)};
}

Outcome reduction_equivalence() {
  std::mt19937_64 rng(8008);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const auto sc = test::random_scenario(rng, test::ModelKind::full_rank, 60);
    const auto truth = simulate(sc.model(), sc.truth, 60, static_cast<std::uint64_t>(i) + 1);
    FilterOptions full, ext;
    full.path = FilterPath::full_rank;
    ext.path = FilterPath::extended;
    const auto a = run_filter(sc.model(), sc.init, ys_of(truth), us_of(truth), full);
    const auto b = run_filter(sc.model(), sc.init, ys_of(truth), us_of(truth), ext);
    for (std::size_t k = 0; k < a.size(); ++k) {
      worst = std::max({worst, max_abs(a[k].x_post - b[k].x_post), max_abs(a[k].f_hat - b[k].f_hat),
                        max_abs(a[k].f_tracked - b[k].f_tracked), max_abs(a[k].P_x - b[k].P_x),
                        max_abs(a[k].P_f - b[k].P_f)});
    }
  }
  return {worst <= 1e-9, "20 models, max deviation = " + fmt("%.2e", worst)};
}

/// Fixed small full-rank model: n = 3, m = 3, p = 1, q = 1.
test::RandomScenario consistency_model() {
  test::RandomScenario s;
  s.dims = SystemDims{3, 3, 1, 1, 1};
  MatrixBundle& b = s.bundle;
  b.A.resize(3, 3);
  b.A << 0.8, 0.1, 0.0, 0.0, 0.7, 0.2, 0.1, 0.0, 0.6;
  b.B = (Matrix(3, 1) << 1.0, 0.0, 0.5).finished();
  b.C = Matrix::Identity(3, 3);
  b.C(0, 1) = 0.3;
  b.Fx = (Matrix(3, 1) << 0.5, 0.0, 0.2).finished();
  b.Fy = (Matrix(3, 1) << 0.0, 0.0, 1.0).finished();
  b.G = (Matrix(3, 1) << 0.0, 1.0, 0.0).finished();
  b.Q = (Matrix(3, 3) << 0.04, 0.01, 0.0, 0.01, 0.03, 0.0, 0.0, 0.0, 0.02).finished();
  b.R = (Matrix(3, 3) << 0.05, 0.0, 0.01, 0.0, 0.04, 0.0, 0.01, 0.0, 0.06).finished();
  b.S = Matrix::Zero(3, 3);
  s.init.x0_hat = (Vector(3) << 1.0, -1.0, 0.5).finished();
  s.init.P0 = 0.2 * Matrix::Identity(3, 3);
  s.truth.input.constant = Vector::Constant(1, 1.0);
  s.truth.faults.channels = {{{2.0, 3}, {-3.0, 6}}};
  s.truth.disturbance.mode = DisturbanceSpec::Mode::sequence;
  for (int k = 0; k < 10; ++k) s.truth.disturbance.sequence.push_back(Vector::Constant(1, 3.0 * std::sin(k)));
  return s;
}

Outcome covariance_consistency() {
  const auto sc = consistency_model();
  const auto model = sc.model();
  const int M = 2000;
  const long N = 10;
  // A random initial state drawn from N(x0_hat, P0) makes P0 the true prior.
  const LowerFactor P0f = cholesky_lower(sc.init.P0);
  std::vector<std::vector<Vector>> ex(static_cast<std::size_t>(N)), ef(static_cast<std::size_t>(N));
  std::vector<StepRecord> reference;
  for (int i = 0; i < M; ++i) {
    auto spec = sc.truth;
    CounterRng g(1'000'000 + static_cast<std::uint64_t>(i));
    Vector z(3);
    for (Eigen::Index j = 0; j < 3; ++j) z(j) = g.normal();
    spec.x0 = sc.init.x0_hat + P0f.L * z;
    const auto truth = simulate(model, spec, N, static_cast<std::uint64_t>(i) + 1);
    const auto rec = run_filter(model, sc.init, ys_of(truth), us_of(truth));
    for (long k = 0; k < N; ++k) {
      const auto s = static_cast<std::size_t>(k);
      ex[s].push_back(truth[s].x_true - rec[s].x_post);
      ef[s].push_back(truth[s].f_true - rec[s].f_hat);
    }
    if (i == 0) reference = rec;
  }

  double worst = 0.0;  // max over entries of |sample - model| / (scale / sqrt(M))
  const double root = std::sqrt(static_cast<double>(M));
  for (long k = 1; k < N; ++k) {
    const auto s = static_cast<std::size_t>(k);
    Vector mx = Vector::Zero(3), mf = Vector::Zero(1);
    for (int i = 0; i < M; ++i) {
      mx += ex[s][static_cast<std::size_t>(i)];
      mf += ef[s][static_cast<std::size_t>(i)];
    }
    mx /= M;
    mf /= M;
    Matrix Sxx = Matrix::Zero(3, 3), Sxf = Matrix::Zero(3, 1);
    for (int i = 0; i < M; ++i) {
      const Vector dx = ex[s][static_cast<std::size_t>(i)] - mx, df = ef[s][static_cast<std::size_t>(i)] - mf;
      Sxx += dx * dx.transpose();
      Sxf += dx * df.transpose();
    }
    Sxx /= (M - 1);
    Sxf /= (M - 1);
    const Matrix& Px = reference[s].P_x;
    const Matrix& Pxf = reference[s].P_xf;
    const double pf = reference[s].P_f(0, 0);
    for (Eigen::Index a = 0; a < 3; ++a) {
      for (Eigen::Index b = 0; b < 3; ++b) {
        const double scale = std::sqrt(Px(a, a) * Px(b, b));
        worst = std::max(worst, std::abs(Sxx(a, b) - Px(a, b)) / (scale / root));
      }
      const double scale = std::sqrt(Px(a, a) * pf);
      worst = std::max(worst, std::abs(Sxf(a, 0) - Pxf(a, 0)) / (scale / root));
    }
  }
  return {worst <= 5.0, "M=2000, 9 steps, worst |sample - model| = " + fmt("%.2f", worst) + " * scale/sqrt(M)"};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"1 fault tracking (Monte Carlo bias)", fault_tracking},
      {"2 covariance trace convergence", covariance_convergence},
      {"3 disturbance decoupling", disturbance_decoupling},
      {"4 gain constraint satisfaction", constraint_satisfaction},
      {"5 oracle equivalence", oracle_equivalence},
      {"6 gain optimality", optimality},
      {"7 covariance/sqrt path equivalence", path_equivalence},
      {"8 full-rank/extended reduction", reduction_equivalence},
      {"9 Monte Carlo covariance consistency", covariance_consistency},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s criterion %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
