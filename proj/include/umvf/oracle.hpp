#pragma once

// Naive reference computations for cross-checking the filter. These use a
// different route on purpose (explicit whitening + orthogonal decomposition,
// dense LU on the KKT system, textbook Kalman recursion) and share no code
// with filter.hpp beyond the model types.

#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/QR>

#include "umvf/model.hpp"

namespace umvf::oracle {

struct WlsSolution {
  Vector f_hat;      // first p entries of z
  Vector d_hat;      // remaining entries of z
  Vector z;
  Matrix joint_cov;  // (E^T H^-1 E)^{-1}, pseudoinverse when singular
};

/// Weighted least squares  min |L^-1 (y~ - E z)|^2  with L L^T = H, solved by
/// whitening and an ordinary (minimum-norm) least-squares solve.
inline WlsSolution whitened_ls_fault(const Vector& y_tilde, const Matrix& E, const Matrix& H, Eigen::Index p) {
  Eigen::LLT<Matrix> llt(H);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::NotPositiveDefinite, "oracle: H is not positive definite");
  const Matrix L = llt.matrixL();
  const Matrix W = L.triangularView<Eigen::Lower>().solve(E);
  const Vector yw = L.triangularView<Eigen::Lower>().solve(y_tilde);

  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(W);
  cod.setThreshold(1e-10);
  WlsSolution out;
  out.z = cod.solve(yw);
  out.f_hat = out.z.head(p);
  out.d_hat = out.z.tail(out.z.size() - p);

  Eigen::CompleteOrthogonalDecomposition<Matrix> normal(W.transpose() * W);
  normal.setThreshold(1e-10);
  out.joint_cov = normal.pseudoInverse();
  return out;
}

/// Solves  [[H, -E], [E^T, 0]] [M21^T; Lambda^T] = [C P; Gamma^T]  and
/// returns M21.
inline Matrix kkt_state_gain(const Matrix& H, const Matrix& E, const Matrix& C_Pbar, const Matrix& Gamma) {
  const Eigen::Index m = H.rows(), c = E.cols(), n = C_Pbar.cols();
  Matrix K = Matrix::Zero(m + c, m + c);
  K.topLeftCorner(m, m) = H;
  K.topRightCorner(m, c) = -E;
  K.bottomLeftCorner(c, m) = E.transpose();
  Matrix rhs(m + c, n);
  rhs.topRows(m) = C_Pbar;
  rhs.bottomRows(c) = Gamma.transpose();

  Eigen::FullPivLU<Matrix> lu(K);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) throw Error(ErrorKind::SingularKkt, "KKT matrix is singular");
  const Matrix sol = lu.solve(rhs);
  return sol.topRows(m).transpose();
}

struct KalmanTrajectory {
  std::vector<Vector> x_post;
  std::vector<Matrix> P_post;
  std::vector<Vector> x_prior;
  std::vector<Matrix> P_prior;
};

/// Textbook Kalman filter. Requires p = q = 0.
inline KalmanTrajectory kalman_reference(const SystemModel& model, const InitialCondition& init,
                                         const std::vector<Vector>& ys, const std::vector<Vector>& us) {
  const SystemDims& d = model.dims();
  if (d.p != 0 || d.q != 0) throw Error(ErrorKind::AssumptionViolated, "kalman_reference needs p = q = 0");
  if (ys.size() != us.size()) throw Error(ErrorKind::LengthMismatch, "measurement and input sequences differ in length");

  KalmanTrajectory out;
  Vector x = init.x0_hat;
  Matrix P = init.P0;
  for (std::size_t k = 0; k < ys.size(); ++k) {
    const MatrixBundle b = matrices_at(model, static_cast<long>(k));
    out.x_prior.push_back(x);
    out.P_prior.push_back(P);

    const Matrix S = b.C * P * b.C.transpose() + b.R;
    Eigen::LLT<Matrix> llt(S);
    if (llt.info() != Eigen::Success) throw Error(ErrorKind::NotPositiveDefinite, "innovation covariance", static_cast<long>(k));
    const Matrix K = llt.solve(b.C * P).transpose();
    x = x + K * (ys[k] - b.C * x);
    P = P - K * b.C * P;
    P = 0.5 * (P + P.transpose());
    out.x_post.push_back(x);
    out.P_post.push_back(P);

    x = b.A * x + b.B * us[k];
    P = b.A * P * b.A.transpose() + b.Q;
  }
  return out;
}

}  // namespace umvf::oracle
