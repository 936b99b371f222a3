#pragma once

// System and noise model:
//   x_{k+1} = A x_k + B u_k + Fx f_k + G d_k + w_k
//   y_k     = C x_k + Fy f_k + v_k
// with cov([v; w]) = [[R, S^T], [S, Q]].

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "umvf/numerics.hpp"

namespace umvf {

struct SystemDims {
  Eigen::Index n = 0;  // state
  Eigen::Index m = 0;  // measurement
  Eigen::Index r = 0;  // known input
  Eigen::Index p = 0;  // fault
  Eigen::Index q = 0;  // disturbance
};

/// All system and noise matrices at one step.
struct MatrixBundle {
  Matrix A, B, C, Fx, Fy, G;
  Matrix Q, R, S;
};

/// Which measurement-update recursion to run.
enum class FilterPath {
  automatic,  // extended whenever the full-rank condition fails
  full_rank,  // requires rank([Fy | C G]) = p + q
  extended,   // rank-deficient fault feedthrough
};

inline const char* to_string(FilterPath path) {
  switch (path) {
    case FilterPath::automatic: return "auto";
    case FilterPath::full_rank: return "full-rank";
    case FilterPath::extended: return "extended";
  }
  return "?";
}

inline void check_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw Error(ErrorKind::DimensionMismatch, std::string(name) + " is " + std::to_string(m.rows()) + "x" +
                                                  std::to_string(m.cols()) + ", expected " + std::to_string(rows) +
                                                  "x" + std::to_string(cols));
  }
  require_finite(m, name);
}

inline void check_bundle(const MatrixBundle& b, const SystemDims& d) {
  check_shape(b.A, d.n, d.n, "A");
  check_shape(b.B, d.n, d.r, "B");
  check_shape(b.C, d.m, d.n, "C");
  check_shape(b.Fx, d.n, d.p, "Fx");
  check_shape(b.Fy, d.m, d.p, "Fy");
  check_shape(b.G, d.n, d.q, "G");
  check_shape(b.Q, d.n, d.n, "Q");
  check_shape(b.R, d.m, d.m, "R");
  check_shape(b.S, d.n, d.m, "S");
}

/// Possibly time-varying linear model. Immutable once built.
class SystemModel {
 public:
  using Provider = std::function<MatrixBundle(long)>;

  SystemModel(SystemDims dims, Provider provider) : dims_(dims), provider_(std::move(provider)) {}

  static SystemModel constant(SystemDims dims, MatrixBundle bundle) {
    return SystemModel(dims, [b = std::move(bundle)](long) { return b; });
  }

  const SystemDims& dims() const noexcept { return dims_; }
  const Provider& provider() const noexcept { return provider_; }

 private:
  SystemDims dims_;
  Provider provider_;
};

/// Evaluates the model at step k and checks every shape.
inline MatrixBundle matrices_at(const SystemModel& model, long k) {
  if (k < 0) throw Error(ErrorKind::DimensionMismatch, "negative step index");
  MatrixBundle b = model.provider()(k);
  try {
    check_bundle(b, model.dims());
  } catch (const Error& e) {
    throw e.at_step(k);
  }
  return b;
}

/// Square-root factorization of the correlated noise pair:
///   v = R_half * v~,  w = X * v~ + Qx_half * w~,  (v~, w~) ~ N(0, I).
struct NoiseFactors {
  LowerFactor R_half;
  Matrix X;        // S * R^{-T/2}
  Matrix Qx_half;  // symmetric PSD root of Q - S R^{-1} S^T
};

inline NoiseFactors factor_noise(const Matrix& Q, const Matrix& R, const Matrix& S) {
  if (Q.rows() != Q.cols() || R.rows() != R.cols() || S.rows() != Q.rows() || S.cols() != R.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "factor_noise: inconsistent Q/R/S shapes");
  }
  NoiseFactors out;
  out.R_half = cholesky_lower(R);
  // X^T = R^{-1/2} S^T, i.e. a forward substitution with the lower factor.
  if (S.size() > 0) {
    out.X = out.R_half.L.triangularView<Eigen::Lower>().solve(S.transpose()).transpose();
  } else {
    out.X = Matrix::Zero(S.rows(), S.cols());
  }
  const Matrix Qx = symmetrize(Q - out.X * out.X.transpose());
  if (Qx.size() > 0 && min_eigenvalue(Qx) < -1e-9 * std::max(std::abs(Qx.trace()), 1e-300)) {
    throw Error(ErrorKind::JointCovarianceIndefinite, "Q - S R^-1 S^T is indefinite");
  }
  // Remaining small negative eigenvalues are rounding; clip them.
  out.Qx_half = Qx.size() > 0 ? psd_sqrt(Qx, std::numeric_limits<double>::infinity()) : Qx;
  return out;
}

struct InitialCondition {
  Vector x0_hat;
  Matrix P0;
};

struct ValidationItem {
  std::string name;
  bool passed = true;
  bool hard = false;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationItem> items;
  Eigen::Index rank_Fy = 0;
  Eigen::Index rank_E = 0;
  Eigen::Index observability_rank = 0;
  FilterPath path = FilterPath::full_rank;

  bool ok() const {
    for (const auto& it : items) {
      if (it.hard && !it.passed) return false;
    }
    return true;
  }

  std::string to_text() const {
    std::string s;
    for (const auto& it : items) {
      s += (it.passed ? "[ok]   " : (it.hard ? "[FAIL] " : "[warn] ")) + it.name;
      if (!it.message.empty()) s += ": " + it.message;
      s += '\n';
    }
    s += "path: " + std::string(to_string(path)) + "\n";
    return s;
  }
};

/// Checks the standing assumptions of the model at k = 0. Hard failures
/// (shapes, R not PD, m < p + q) throw; observability and the rank
/// condition only select the path or produce warnings.
inline ValidationReport validate_scenario(const SystemModel& model, const InitialCondition& init) {
  ValidationReport rep;
  const SystemDims& d = model.dims();

  if (d.n < 1 || d.m < 1 || d.r < 0 || d.p < 0 || d.q < 0) {
    throw Error(ErrorKind::AssumptionViolated, "dimensions must satisfy n >= 1, m >= 1");
  }
  if (d.m < d.p + d.q) throw Error(ErrorKind::AssumptionViolated, "m ≥ p+q violated");
  rep.items.push_back({"m >= p+q", true, true, ""});

  const MatrixBundle b = matrices_at(model, 0);
  check_shape(init.x0_hat, d.n, 1, "x0_hat");
  check_shape(init.P0, d.n, d.n, "P0");
  rep.items.push_back({"dimensions", true, true, ""});

  cholesky_lower(b.R);
  rep.items.push_back({"R positive definite", true, true, ""});

  Matrix joint(d.m + d.n, d.m + d.n);
  joint << b.R, b.S.transpose(), b.S, b.Q;
  const double joint_min = min_eigenvalue(joint);
  if (joint_min < -psd_tolerance(joint)) {
    throw Error(ErrorKind::JointCovarianceIndefinite, "joint noise covariance [[R,S^T],[S,Q]] is indefinite");
  }
  rep.items.push_back({"joint noise covariance PSD", true, true, ""});

  if (min_eigenvalue(init.P0) < -psd_tolerance(init.P0)) {
    throw Error(ErrorKind::AssumptionViolated, "P0 is not positive semidefinite");
  }
  rep.items.push_back({"P0 PSD", true, true, ""});

  rep.rank_Fy = numerical_rank(b.Fy);
  Matrix E(d.m, d.p + d.q);
  E << b.Fy, b.C * b.G;
  rep.rank_E = numerical_rank(E);
  const bool full = rep.rank_Fy == d.p && rep.rank_E == d.p + d.q;
  rep.path = full ? FilterPath::full_rank : FilterPath::extended;
  rep.items.push_back({"rank([Fy | C G]) = p+q", full, false,
                       "rank(Fy)=" + std::to_string(rep.rank_Fy) + ", rank(E)=" + std::to_string(rep.rank_E) +
                           ", p+q=" + std::to_string(d.p + d.q)});

  Matrix obs(d.m * d.n, d.n);
  Matrix blk = b.C;
  for (Eigen::Index i = 0; i < d.n; ++i) {
    obs.middleRows(i * d.m, d.m) = blk;
    blk = blk * b.A;
  }
  rep.observability_rank = numerical_rank(obs);
  rep.items.push_back({"(C, A) observable", rep.observability_rank == d.n, false,
                       "rank=" + std::to_string(rep.observability_rank)});
  return rep;
}

}  // namespace umvf
