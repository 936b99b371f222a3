#pragma once

// Unbiased minimum-variance joint state and fault filter for systems with
// unknown disturbances.
//
// Measurement update at step k, with innovation  y~ = y - C x_prior:
//
//   H   = C P_prior C^T + R
//   E*  = (E^T H^-1 E)^+ E^T H^-1
//   M11 = T E*                                   (fault gain)
//   M21 = P_prior C^T H^-1 (I - E E*) + Gamma E* (state gain)
//
// The gains satisfy M11 E = T and M21 E = Gamma, which cancels the fault and
// the previous-step disturbance from the estimation errors. Two constraint
// layouts exist:
//
//   full-rank: E = [Fy | C G_{k-1}],                   T = [I | 0]
//   extended:  E = [Fy | C Fx_{k-1} S_{k-1} | C G_{k-1}], T = [Phi | 0 | 0]
//
// where S = I - Fy^+ Fy projects onto fault directions the current
// measurement cannot see and Phi = I - S. In the extended layout those
// directions are recovered one step late from the middle block of the
// weighted least-squares solution z = E* y~; `f_tracked` combines the
// current visible part with that delayed part.

#include <utility>
#include <vector>

#include "umvf/model.hpp"

namespace umvf {

enum class CovarianceMode {
  covariance,  // plain covariance recursion, expanded posterior formula
  sqrt,        // factored prior, Cholesky-whitened gains, Joseph posterior
};

inline const char* to_string(CovarianceMode mode) {
  return mode == CovarianceMode::sqrt ? "sqrt" : "covariance";
}

struct FilterOptions {
  FilterPath path = FilterPath::automatic;
  CovarianceMode mode = CovarianceMode::sqrt;
  /// Relative singular-value cutoff for ranks and pseudoinverses inside the
  /// filter.
  double rank_tol = 1e-10;
  /// Constraint residual above which a step is flagged inconsistent.
  double consistency_tol = 1e-6;
};

struct FilterState {
  long k = 0;

  Vector x_prior;               // x^_{k|k-1}
  Matrix P_prior;               // prior error covariance
  LowerFactor P_prior_factor;   // maintained in sqrt mode only

  Vector x_post;                // x^_{k|k}
  Vector f_hat;                 // M11 y~, drives the time update
  Matrix P_x, P_f, P_xf;        // joint covariance of (x~, f~)

  Vector f_tracked;             // visible part now + invisible part one step late
  Matrix P_f_tracked;

  Matrix Sigma_prev;            // S_{k-1}, zero before the first update
  Matrix G_prev;                // G_{k-1}, zero at k = 0
  Matrix Fx_prev;               // Fx_{k-1}, zero at k = 0
};

inline FilterState initialize(const SystemDims& d, const InitialCondition& init,
                              const FilterOptions& opt = {}) {
  check_shape(init.x0_hat, d.n, 1, "x0_hat");
  check_shape(init.P0, d.n, d.n, "P0");
  FilterState s;
  s.k = 0;
  s.x_prior = init.x0_hat;
  s.P_prior = symmetrize(init.P0);
  if (opt.mode == CovarianceMode::sqrt) s.P_prior_factor = lower_factor_psd(s.P_prior);
  s.x_post = init.x0_hat;
  s.f_hat = Vector::Zero(d.p);
  s.P_x = s.P_prior;
  s.P_f = Matrix::Zero(d.p, d.p);
  s.P_xf = Matrix::Zero(d.n, d.p);
  s.f_tracked = Vector::Zero(d.p);
  s.P_f_tracked = Matrix::Zero(d.p, d.p);
  s.Sigma_prev = Matrix::Zero(d.p, d.p);
  s.G_prev = Matrix::Zero(d.n, d.q);
  s.Fx_prev = Matrix::Zero(d.n, d.p);
  return s;
}

struct SigmaProjector {
  Matrix Sigma;  // I - Fy^+ Fy
  Matrix Phi;    // I - Sigma
};

inline SigmaProjector compute_sigma(const Matrix& Fy, double rank_tol = -1.0) {
  const Eigen::Index p = Fy.cols();
  SigmaProjector out;
  out.Phi = symmetrize(pseudo_inverse(Fy, rank_tol) * Fy);
  out.Sigma = Matrix::Identity(p, p) - out.Phi;
  return out;
}

struct ConstraintBlocks {
  Matrix E;          // m x c
  Matrix T;          // p x c
  Matrix Gamma;      // n x c
  Matrix T_tracked;  // p x c, selects f_tracked from z
  Matrix Sigma;      // S_k
  FilterPath mode = FilterPath::full_rank;
  bool full_column_rank = false;
};

/// Assembles (E, T, Gamma) for step k. `mode` = automatic picks extended when
/// rank(Fy) < p or rank([Fy | C G_prev]) < p + q.
inline ConstraintBlocks build_constraints(const MatrixBundle& b, const Matrix& G_prev, const Matrix& Fx_prev,
                                          const Matrix& Sigma_prev, FilterPath mode, double rank_tol = -1.0) {
  const Eigen::Index m = b.C.rows(), n = b.C.cols(), p = b.Fy.cols(), q = G_prev.cols();
  const SigmaProjector sp = compute_sigma(b.Fy, rank_tol);
  const Matrix CG = b.C * G_prev;

  Matrix E_full(m, p + q);
  E_full << b.Fy, CG;
  const Eigen::Index rank_Fy = numerical_rank(b.Fy, rank_tol);
  const Eigen::Index rank_E = numerical_rank(E_full, rank_tol);
  const Eigen::Index rank_G = numerical_rank(G_prev, rank_tol);

  if (mode == FilterPath::automatic) {
    mode = (rank_Fy < p || rank_E < p + q) ? FilterPath::extended : FilterPath::full_rank;
  }

  ConstraintBlocks out;
  out.mode = mode;
  out.Sigma = sp.Sigma;
  if (mode == FilterPath::full_rank) {
    // Before the first time update G_prev is zero and only Fy has to be
    // full column rank.
    if (rank_Fy < p || rank_E < p + rank_G) {
      throw Error(ErrorKind::RankDeficient, "full-rank path requires rank([Fy | C G]) = p+q; got rank(Fy)=" +
                                                std::to_string(rank_Fy) + ", rank(E)=" + std::to_string(rank_E));
    }
    out.E = std::move(E_full);
    out.T = Matrix::Zero(p, p + q);
    out.T.leftCols(p).setIdentity();
    out.Gamma = Matrix::Zero(n, p + q);
    out.Gamma.rightCols(q) = G_prev;
    out.T_tracked = out.T;
    out.full_column_rank = rank_E == p + q;
    return out;
  }

  const Matrix FxS = Fx_prev * Sigma_prev;
  out.E.resize(m, 2 * p + q);
  out.E << b.Fy, b.C * FxS, CG;
  out.T = Matrix::Zero(p, 2 * p + q);
  out.T.leftCols(p) = sp.Phi;
  out.Gamma = Matrix::Zero(n, 2 * p + q);
  out.Gamma.middleCols(p, p) = FxS;
  out.Gamma.rightCols(q) = G_prev;
  out.T_tracked = out.T;
  out.T_tracked.middleCols(p, p) = Sigma_prev;
  out.full_column_rank = numerical_rank(out.E, rank_tol) == out.E.cols();
  return out;
}

/// H = C P C^T + R.
inline Matrix innovation_covariance(const Matrix& P_prior, const Matrix& C, const Matrix& R) {
  return symmetrize(C * P_prior * C.transpose() + R);
}

/// H = (C L)(C L)^T + R from a factor of the prior covariance.
inline Matrix innovation_covariance(const LowerFactor& P_factor, const Matrix& C, const Matrix& R) {
  const Matrix CL = C * P_factor.L;
  return symmetrize(CL * CL.transpose() + R);
}

struct FaultGain {
  Matrix M11;     // p x m
  Matrix E_star;  // c x m
};

struct GainPair {
  Matrix M11;
  Matrix M21;
  Matrix E_star;
  Matrix H;
};

/// E* and M11 = T E*. In sqrt mode E* = (L^-1 E)^+ L^-1 with H = L L^T, which
/// avoids squaring the condition number; in covariance mode the normal
/// matrix E^T H^-1 E is formed and inverted (pseudoinverse when singular).
inline FaultGain fault_gain(const ConstraintBlocks& blocks, const Matrix& H,
                            CovarianceMode mode = CovarianceMode::sqrt, double rank_tol = -1.0) {
  const LowerFactor Hf = cholesky_lower(H);
  FaultGain out;
  if (blocks.E.cols() == 0) {
    out.E_star = Matrix::Zero(0, H.rows());
  } else if (mode == CovarianceMode::sqrt) {
    const auto L = Hf.L.triangularView<Eigen::Lower>();
    const Matrix W = L.solve(blocks.E);
    // (W^+ L^-1)^T = L^-T (W^+)^T
    out.E_star = L.transpose().solve(pseudo_inverse(W, rank_tol).transpose()).transpose();
  } else {
    const Matrix HiE = solve_spd(Hf, blocks.E);
    const Matrix N = symmetrize(blocks.E.transpose() * HiE);
    if (blocks.full_column_rank) {
      out.E_star = solve_spd(N, HiE.transpose());
    } else {
      out.E_star = pseudo_inverse(N, rank_tol) * HiE.transpose();
    }
  }
  out.M11 = blocks.T * out.E_star;
  return out;
}

/// M21 = P C^T H^-1 (I - E E*) + Gamma E*.
inline Matrix state_gain(const Matrix& P_prior, const Matrix& C, const Matrix& H, const ConstraintBlocks& blocks,
                         const Matrix& E_star) {
  const Eigen::Index m = H.rows();
  const Matrix K = solve_spd(H, C * P_prior).transpose();  // P C^T H^-1
  if (blocks.E.cols() == 0) return K;
  const Matrix I = Matrix::Identity(m, m);
  return K * (I - blocks.E * E_star) + blocks.Gamma * E_star;
}

/// Everything the measurement update computed besides the new state.
struct UpdateDetail {
  ConstraintBlocks blocks;
  GainPair gains;
  Vector innovation;  // y~
  Vector z;           // E* y~ : [f_k; (S f_{k-1}); d_{k-1}]
  Vector d_hat;       // estimate of d_{k-1}
  double res_M11 = 0.0;
  double res_M21 = 0.0;
  double fault_leak = 0.0;        // |M11 C Fx_{k-1} S_{k-1}|_max
  double disturbance_leak = 0.0;  // |M11 C G_{k-1}|_max
  bool inconsistent = false;
};

inline FilterState measurement_update(const FilterState& state, const Vector& y, const MatrixBundle& b,
                                      const FilterOptions& opt = {}, UpdateDetail* detail = nullptr) {
  const Eigen::Index n = b.A.rows(), m = b.C.rows(), q = b.G.cols();
  check_shape(y, m, 1, "y");

  ConstraintBlocks blocks = build_constraints(b, state.G_prev, state.Fx_prev, state.Sigma_prev, opt.path, opt.rank_tol);

  const Matrix H = opt.mode == CovarianceMode::sqrt ? innovation_covariance(state.P_prior_factor, b.C, b.R)
                                                    : innovation_covariance(state.P_prior, b.C, b.R);
  const FaultGain fg = fault_gain(blocks, H, opt.mode, opt.rank_tol);
  const Matrix M21 = state_gain(state.P_prior, b.C, H, blocks, fg.E_star);
  const Matrix& M11 = fg.M11;

  const Vector innov = y - b.C * state.x_prior;
  const Vector z = fg.E_star * innov;

  FilterState out = state;
  out.f_hat = M11 * innov;
  out.x_post = state.x_prior + M21 * innov;
  out.f_tracked = blocks.T_tracked * z;

  const Matrix I = Matrix::Identity(n, n);
  const Matrix IMC = I - M21 * b.C;
  const Matrix& Pb = state.P_prior;
  if (opt.mode == CovarianceMode::sqrt) {
    out.P_x = symmetrize(IMC * Pb * IMC.transpose() + M21 * b.R * M21.transpose());
  } else {
    const Matrix MCP = M21 * b.C * Pb;
    out.P_x = Pb - MCP - MCP.transpose() + M21 * H * M21.transpose();
  }
  out.P_f = symmetrize(M11 * H * M11.transpose());
  out.P_xf = (M21 * b.R - IMC * Pb * b.C.transpose()) * M11.transpose();
  const Matrix TE = blocks.T_tracked * fg.E_star;
  out.P_f_tracked = symmetrize(TE * H * TE.transpose());
  out.Sigma_prev = blocks.Sigma;

  if (!out.x_post.allFinite() || !out.f_hat.allFinite() || !out.P_x.allFinite()) {
    throw Error(ErrorKind::NonFinite, "measurement update produced non-finite values", state.k);
  }

  if (detail) {
    detail->res_M11 = max_abs(M11 * blocks.E - blocks.T);
    detail->res_M21 = max_abs(M21 * blocks.E - blocks.Gamma);
    detail->fault_leak = max_abs(M11 * b.C * state.Fx_prev * state.Sigma_prev);
    detail->disturbance_leak = max_abs(M11 * b.C * state.G_prev);
    detail->inconsistent = detail->res_M11 > opt.consistency_tol || detail->res_M21 > opt.consistency_tol;
    detail->innovation = innov;
    detail->z = z;
    detail->d_hat = q > 0 ? Vector(z.tail(q)) : Vector(0);
    detail->gains = GainPair{M11, M21, fg.E_star, H};
    detail->blocks = std::move(blocks);
  }
  return out;
}

inline FilterState time_update(const FilterState& state, const Vector& u, const MatrixBundle& b,
                               const FilterOptions& opt = {}) {
  const Eigen::Index n = b.A.rows(), p = b.Fx.cols();
  check_shape(u, b.B.cols(), 1, "u");

  FilterState out = state;
  out.x_prior = b.A * state.x_post + b.Fx * state.f_hat + b.B * u;

  Matrix J(n + p, n + p);
  J << state.P_x, state.P_xf, state.P_xf.transpose(), state.P_f;
  J = symmetrize(J);
  const double lam = min_eigenvalue(J);
  if (lam < -psd_tolerance(J)) {
    throw Error(ErrorKind::JointCovarianceIndefinite,
                "joint (x, f) covariance has eigenvalue " + std::to_string(lam), state.k);
  }
  if (opt.mode == CovarianceMode::sqrt && lam < 0.0) J = clip_psd(J);

  Matrix AF(n, n + p);
  AF << b.A, b.Fx;
  Matrix P = AF * J * AF.transpose() + b.Q;
  if (opt.mode == CovarianceMode::sqrt) {
    out.P_prior = symmetrize(P);
    out.P_prior_factor = lower_factor_psd(out.P_prior);
  } else {
    out.P_prior = std::move(P);
  }
  if (!out.x_prior.allFinite() || !out.P_prior.allFinite()) {
    throw Error(ErrorKind::NonFinite, "time update produced non-finite values", state.k);
  }

  out.G_prev = b.G;
  out.Fx_prev = b.Fx;
  out.k = state.k + 1;
  return out;
}

/// Per-step log. `trace_Pf` refers to the tracked fault estimate.
struct StepRecord {
  long k = 0;
  Vector x_prior;
  Vector x_post;
  Vector f_hat;
  Vector f_tracked;
  Vector d_hat;
  Matrix P_x, P_f, P_xf, P_f_tracked;
  double trace_Px = 0.0;
  double trace_Pf = 0.0;
  double res_M11 = 0.0;
  double res_M21 = 0.0;
  double fault_leak = 0.0;
  double disturbance_leak = 0.0;
  bool inconsistent = false;
  FilterPath path = FilterPath::full_rank;
};

/// Measurement update at k followed by the time update to k+1.
inline std::pair<FilterState, StepRecord> step(const FilterState& state, const Vector& y, const Vector& u,
                                               const SystemModel& model, const FilterOptions& opt = {}) {
  try {
    const MatrixBundle b = matrices_at(model, state.k);
    UpdateDetail det;
    const FilterState post = measurement_update(state, y, b, opt, &det);

    StepRecord rec;
    rec.k = state.k;
    rec.x_prior = state.x_prior;
    rec.x_post = post.x_post;
    rec.f_hat = post.f_hat;
    rec.f_tracked = post.f_tracked;
    rec.d_hat = det.d_hat;
    rec.P_x = post.P_x;
    rec.P_f = post.P_f;
    rec.P_xf = post.P_xf;
    rec.P_f_tracked = post.P_f_tracked;
    rec.trace_Px = post.P_x.trace();
    rec.trace_Pf = post.P_f_tracked.trace();
    rec.res_M11 = det.res_M11;
    rec.res_M21 = det.res_M21;
    rec.fault_leak = det.fault_leak;
    rec.disturbance_leak = det.disturbance_leak;
    rec.inconsistent = det.inconsistent;
    rec.path = det.blocks.mode;

    return {time_update(post, u, b, opt), std::move(rec)};
  } catch (const Error& e) {
    if (e.step()) throw;
    throw e.at_step(state.k);
  }
}

/// Runs the filter over aligned measurement/input sequences.
inline std::vector<StepRecord> run_filter(const SystemModel& model, const InitialCondition& init,
                                          const std::vector<Vector>& ys, const std::vector<Vector>& us,
                                          const FilterOptions& opt = {}) {
  if (ys.size() != us.size()) throw Error(ErrorKind::LengthMismatch, "measurement and input sequences differ in length");
  std::vector<StepRecord> out;
  out.reserve(ys.size());
  FilterState s = initialize(model.dims(), init, opt);
  for (std::size_t i = 0; i < ys.size(); ++i) {
    auto [next, rec] = step(s, ys[i], us[i], model, opt);
    s = std::move(next);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace umvf
