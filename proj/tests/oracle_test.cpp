#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"
#include "umvf/oracle.hpp"

namespace umvf {
namespace {

TEST(WhitenedLs, IdentityWeights) {
  Vector y(3);
  y << 1, -2, 3;
  const auto s = oracle::whitened_ls_fault(y, Matrix::Identity(3, 3), Matrix::Identity(3, 3), 2);
  EXPECT_NEAR(max_abs(s.z - y), 0.0, 1e-15);
  EXPECT_NEAR(max_abs(s.f_hat - y.head(2)), 0.0, 1e-15);
  EXPECT_EQ(s.d_hat.size(), 1);
  EXPECT_NEAR(max_abs(s.joint_cov - Matrix::Identity(3, 3)), 0.0, 1e-14);
}

TEST(WhitenedLs, MatchesNormalEquationsForFullColumnRank) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index m = test::pick(rng, 2, 7), c = test::pick(rng, 1, m);
    const Matrix E = test::random_matrix(rng, m, c);
    const Matrix H = test::random_spd(rng, m, 0.1);
    const Vector y = test::random_matrix(rng, m, 1);
    const Matrix Hi = H.inverse();
    const Matrix N = E.transpose() * Hi * E;
    const Vector z = N.ldlt().solve(E.transpose() * Hi * y);
    const auto s = oracle::whitened_ls_fault(y, E, H, 0);
    EXPECT_LE(max_abs(s.z - z), 1e-8 * std::max(1.0, max_abs(z)));
    EXPECT_LE(max_abs(s.joint_cov - N.inverse()), 1e-8 * std::max(1.0, max_abs(N.inverse())));
  }
}

TEST(WhitenedLs, ScalarExample) {
  const auto s = oracle::whitened_ls_fault(Vector::Constant(1, 6.0), Matrix::Constant(1, 1, 2.0),
                                           Matrix::Constant(1, 1, 4.0), 1);
  EXPECT_NEAR(s.f_hat(0), 3.0, 1e-15);
  EXPECT_NEAR(s.joint_cov(0, 0), 1.0, 1e-15);
}

TEST(WhitenedLs, ResidualIsOrthogonalInTheWeightedMetric) {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index m = test::pick(rng, 2, 7), c = test::pick(rng, 1, m);
    Matrix E = test::random_matrix(rng, m, c);
    if (c > 1 && trial % 3 == 0) E.col(c - 1) = E.col(0);  // rank-deficient case
    const Matrix H = test::random_spd(rng, m, 0.1);
    const Vector y = test::random_matrix(rng, m, 1);
    const auto s = oracle::whitened_ls_fault(y, E, H, 0);
    const Vector g = E.transpose() * H.llt().solve(y - E * s.z);
    EXPECT_LE(max_abs(g), 1e-9 * std::max(1.0, max_abs(y))) << "trial " << trial;
  }
}

TEST(KktStateGain, ScalarExample) {
  // [[2, -1], [1, 0]] [M; l] = [1; 3]  gives  M = 3.
  const Matrix M = oracle::kkt_state_gain(Matrix::Constant(1, 1, 2.0), Matrix::Constant(1, 1, 1.0),
                                          Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 3.0));
  EXPECT_NEAR(M(0, 0), 3.0, 1e-15);
}

TEST(KktStateGain, SingularSystemIsReported) {
  Matrix E = Matrix::Zero(2, 2);
  E(0, 0) = 1.0;
  try {
    oracle::kkt_state_gain(Matrix::Identity(2, 2), E, Matrix::Identity(2, 2), Matrix::Zero(2, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SingularKkt);
  }
}

TEST(KktStateGain, SatisfiesConstraintWithMinimalCost) {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index m = test::pick(rng, 2, 6), n = test::pick(rng, 1, 6), c = test::pick(rng, 1, m);
    const Matrix H = test::random_spd(rng, m, 0.1);
    const Matrix E = test::random_matrix(rng, m, c);
    const Matrix CP = test::random_matrix(rng, m, n);
    const Matrix Gamma = test::random_matrix(rng, n, c);
    const Matrix M = oracle::kkt_state_gain(H, E, CP, Gamma);
    EXPECT_LE(max_abs(M * E - Gamma), 1e-9);
    // Stationarity: H M^T - C P lies in range(E).
    const Matrix G = H * M.transpose() - CP;
    const Matrix proj = Matrix::Identity(m, m) - E * pseudo_inverse(E, 1e-12);
    EXPECT_LE(max_abs(proj * G), 1e-9);
  }
}

TEST(KalmanReference, ScalarFirstStep) {
  SystemDims d{1, 1, 0, 0, 0};
  MatrixBundle b;
  b.A = Matrix::Constant(1, 1, 1.0);
  b.B = Matrix::Zero(1, 0);
  b.C = Matrix::Constant(1, 1, 1.0);
  b.Fx = Matrix::Zero(1, 0);
  b.Fy = Matrix::Zero(1, 0);
  b.G = Matrix::Zero(1, 0);
  b.Q = Matrix::Constant(1, 1, 0.5);
  b.R = Matrix::Constant(1, 1, 1.0);
  b.S = Matrix::Zero(1, 1);
  const auto tr = oracle::kalman_reference(SystemModel::constant(d, b), {Vector::Zero(1), Matrix::Identity(1, 1)},
                                           {Vector::Constant(1, 2.0), Vector::Constant(1, 2.0)},
                                           {Vector::Zero(0), Vector::Zero(0)});
  EXPECT_NEAR(tr.x_post[0](0), 1.0, 1e-15);
  EXPECT_NEAR(tr.P_post[0](0, 0), 0.5, 1e-15);
  // P_prior = 1, K = 0.5, x = 1 + 0.5 (2 - 1)
  EXPECT_NEAR(tr.P_prior[1](0, 0), 1.0, 1e-15);
  EXPECT_NEAR(tr.x_post[1](0), 1.5, 1e-15);
}

TEST(KalmanReference, RequiresNoFaults) {
  const auto cfg = test::flight_config();
  EXPECT_THROW(oracle::kalman_reference(cfg.model(), cfg.init, {}, {}), Error);
}

}  // namespace
}  // namespace umvf
