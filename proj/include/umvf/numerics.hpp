#pragma once

// Dense factorizations and solves shared by the rest of the library. Nothing
// in umvf forms an explicit inverse; every "X^-1 * B" goes through
// solve_spd or pseudo_inverse.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "umvf/errors.hpp"

namespace umvf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Lower-triangular Cholesky-type factor, `L * L^T` equals the factored matrix.
struct LowerFactor {
  Matrix L;

  Matrix reconstruct() const { return L * L.transpose(); }
  Eigen::Index size() const { return L.rows(); }
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline void require_finite(const Matrix& m, const std::string& what) {
  if (!m.allFinite()) throw Error(ErrorKind::NonFinite, what + " has non-finite entries");
}

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

/// Largest absolute entry; 0 for empty matrices.
inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

/// Default relative rank threshold: eps * max(rows, cols).
inline double default_rank_tol(const Matrix& m) {
  return std::numeric_limits<double>::epsilon() *
         static_cast<double>(std::max<Eigen::Index>({m.rows(), m.cols(), 1}));
}

/// Cholesky factor of a symmetric positive-definite matrix. The input is
/// symmetrized first. A pivot below `eps * n * max|diag|` is rejected.
inline LowerFactor cholesky_lower(const Matrix& m) {
  if (m.rows() != m.cols()) throw Error(ErrorKind::DimensionMismatch, "cholesky_lower expects a square matrix");
  require_finite(m, "cholesky_lower input");
  const Eigen::Index n = m.rows();
  if (n == 0) return {Matrix(0, 0)};
  const Matrix s = symmetrize(m);
  const double scale = s.diagonal().cwiseAbs().maxCoeff();
  const double floor = std::numeric_limits<double>::epsilon() * static_cast<double>(n) * scale;

  Eigen::LLT<Matrix> llt(s);
  if (llt.info() != Eigen::Success || scale <= 0.0) {
    throw Error(ErrorKind::NotPositiveDefinite, "matrix is not positive definite");
  }
  Matrix L = llt.matrixL();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(L(i, i) * L(i, i) > floor)) {
      throw Error(ErrorKind::NotPositiveDefinite, "Cholesky pivot " + std::to_string(i) + " below tolerance");
    }
  }
  return {std::move(L)};
}

inline Vector singular_values(const Matrix& m) {
  if (m.size() == 0) return Vector(0);
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues();
}

/// Count of singular values above `tol * sigma_max`. Negative `tol` selects
/// the default threshold.
inline Eigen::Index numerical_rank(const Matrix& m, double tol = -1.0) {
  require_finite(m, "numerical_rank input");
  const Vector sv = singular_values(m);
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  const double rel = tol < 0.0 ? default_rank_tol(m) : tol;
  const double cut = rel * sv(0);
  return static_cast<Eigen::Index>((sv.array() > cut).count());
}

/// Moore-Penrose pseudoinverse from a full SVD. Singular values at or below
/// `tol * sigma_max` are treated as zero.
inline Matrix pseudo_inverse(const Matrix& m, double tol = -1.0) {
  require_finite(m, "pseudo_inverse input");
  if (m.size() == 0) return Matrix::Zero(m.cols(), m.rows());
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  Matrix out = Matrix::Zero(m.cols(), m.rows());
  if (sv.size() == 0 || sv(0) == 0.0) return out;
  const double rel = tol < 0.0 ? default_rank_tol(m) : tol;
  const double cut = rel * sv(0);
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cut) out.noalias() += svd.matrixV().col(i) * (1.0 / sv(i)) * svd.matrixU().col(i).transpose();
  }
  return out;
}

/// Solves A*X = B for SPD A via Cholesky and two triangular solves.
inline Matrix solve_spd(const LowerFactor& factor, const Matrix& b) {
  if (factor.size() != b.rows()) throw Error(ErrorKind::DimensionMismatch, "solve_spd: row count mismatch");
  if (b.size() == 0) return Matrix(b.rows(), b.cols());
  const auto L = factor.L.triangularView<Eigen::Lower>();
  Matrix x = L.solve(b);
  return L.transpose().solve(x);
}

inline Matrix solve_spd(const Matrix& a, const Matrix& b) { return solve_spd(cholesky_lower(a), b); }

/// Smallest eigenvalue of the symmetric part of `m`.
inline double min_eigenvalue(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

/// Tolerance used for "PSD up to rounding" checks: 1e-9 * trace, with a tiny
/// absolute floor so an all-zero matrix passes.
inline double psd_tolerance(const Matrix& m) { return 1e-9 * std::max(m.trace(), 1e-12); }

/// Symmetric PSD square root V*sqrt(max(lambda,0))*V^T. Eigenvalues below
/// `-indefinite_tol` raise JointCovarianceIndefinite.
inline Matrix psd_sqrt(const Matrix& m, double indefinite_tol) {
  if (m.size() == 0) return Matrix(m.rows(), m.cols());
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m));
  const Vector& lam = es.eigenvalues();
  if (lam(0) < -indefinite_tol) {
    throw Error(ErrorKind::JointCovarianceIndefinite,
                "smallest eigenvalue " + std::to_string(lam(0)) + " below tolerance");
  }
  const Vector root = lam.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

/// Clips eigenvalues of a symmetric matrix at zero.
inline Matrix clip_psd(const Matrix& m) {
  if (m.size() == 0) return m;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m));
  const Vector lam = es.eigenvalues().cwiseMax(0.0);
  return symmetrize(es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose());
}

/// Lower-triangular factor of a PSD matrix. Uses Cholesky when the matrix is
/// numerically PD; otherwise triangularizes a PSD square root with QR, so the
/// diagonal is only guaranteed non-negative.
inline LowerFactor lower_factor_psd(const Matrix& m) {
  try {
    return cholesky_lower(m);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NotPositiveDefinite) throw;
  }
  const Matrix root = psd_sqrt(m, psd_tolerance(m));
  Eigen::HouseholderQR<Matrix> qr(root.transpose());
  Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  Matrix L = r.transpose();
  for (Eigen::Index i = 0; i < L.cols(); ++i) {
    if (L(i, i) < 0.0) L.col(i) *= -1.0;
  }
  return {std::move(L)};
}

}  // namespace umvf
