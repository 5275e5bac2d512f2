#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "hero/prior.hpp"
#include "support.hpp"

using namespace hero;

namespace {

PriorConfig random_config(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.01, 2.0);
  PriorConfig c;
  for (int i = 0; i < 6; ++i) c.qc_diag(i) = u(rng);
  return c;
}

StateVar random_state(std::mt19937_64& rng) {
  return {test::random_pose(rng, 1.0, 3.0), test::random_twist(rng, 0.5, 2.0)};
}

// Perturbs pose (left) or velocity (additive) of a state along one coordinate.
StateVar perturb(StateVar s, int coord, double h) {
  Twist d = Twist::Zero();
  d(coord % 6) = h;
  if (coord < 6)
    s.pose = lie::exp_map(d) * s.pose;
  else
    s.velocity += d;
  return s;
}

}  // namespace

TEST(Prior, ConstantVelocityHasZeroError) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const StateVar a = random_state(rng);
    const double dt = 0.05 + 0.5 * std::uniform_real_distribution<double>(0, 1)(rng);
    const StateVar b{lie::exp_map(dt * a.velocity) * a.pose, a.velocity};
    EXPECT_LT(prior_error(a, b, dt).norm(), 1e-8);
  }
}

TEST(Prior, ErrorExample) {
  StateVar a, b;
  b.pose = Pose::planar(1.0, 0.0, 0.0);
  a.velocity(0) = 2.0;
  b.velocity(0) = 3.0;
  const Vector12d e = prior_error(a, b, 0.25);
  Vector12d expected = Vector12d::Zero();
  expected(0) = 1.0 - 0.5;
  expected(6) = 1.0;
  EXPECT_LT((e - expected).norm(), 1e-12);
}

TEST(Prior, NonPositiveDtThrows) {
  EXPECT_THROW(prior_error(StateVar{}, StateVar{}, 0.0), std::invalid_argument);
  EXPECT_THROW(prior_information(PriorConfig{}, -1.0), std::invalid_argument);
}

TEST(Prior, InvalidConfigThrows) {
  PriorConfig c;
  c.qc_diag(3) = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.qc_diag(3) = std::nan("");
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Prior, JacobiansMatchFiniteDifferences) {
  std::mt19937_64 rng(2);
  const double h = 1e-6;
  for (int trial = 0; trial < 50; ++trial) {
    const StateVar a = random_state(rng), b0 = random_state(rng);
    const double dt = 0.25;
    // Keep the relative rotation moderate so log stays well inside its domain.
    const StateVar b{lie::exp_map(test::random_twist(rng, 0.8, 1.0)) * a.pose, b0.velocity};
    const PriorFactor f = make_prior_factor(a, b, dt, PriorConfig{});
    EXPECT_LT((f.error - prior_error(a, b, dt)).norm(), 1e-14);
    for (int c = 0; c < 12; ++c) {
      const Vector12d fp = (prior_error(perturb(a, c, h), b, dt) - prior_error(perturb(a, c, -h), b, dt)) / (2 * h);
      const Vector12d fn = (prior_error(a, perturb(b, c, h), dt) - prior_error(a, perturb(b, c, -h), dt)) / (2 * h);
      EXPECT_LT((fp - f.jac_prev.col(c)).lpNorm<Eigen::Infinity>(), 1e-5) << "prev col " << c;
      EXPECT_LT((fn - f.jac_next.col(c)).lpNorm<Eigen::Infinity>(), 1e-5) << "next col " << c;
    }
  }
}

TEST(Prior, JinvTimesVectorJacobian) {
  std::mt19937_64 rng(3);
  const double h = 1e-6;
  for (int trial = 0; trial < 50; ++trial) {
    const Twist xi = test::random_twist(rng, 2.0), w = test::random_twist(rng, 1.0);
    const Matrix6d M = jinv_times_vector_jacobian(xi, w);
    for (int c = 0; c < 6; ++c) {
      Twist d = Twist::Zero();
      d(c) = h;
      const Twist fd = (lie::left_jacobian_inverse<double>(xi + d) * w - lie::left_jacobian_inverse<double>(xi - d) * w) /
                       (2 * h);
      EXPECT_LT((fd - M.col(c)).lpNorm<Eigen::Infinity>(), 1e-7);
    }
  }
}

TEST(Prior, InformationMatchesNumericInverse) {
  std::mt19937_64 rng(4);
  for (double dt : {0.05, 0.1, 0.25, 1.0, 2.0}) {
    const PriorConfig c = random_config(rng);
    const Matrix12d Q = prior_covariance(c, dt);
    const Matrix12d P = prior_information(c, dt);
    const Matrix12d oracle = Q.fullPivLu().inverse();
    EXPECT_LT((P - oracle).norm() / oracle.norm(), 1e-10) << dt;
    EXPECT_LT((P * Q - Matrix12d::Identity()).norm(), 1e-10);
  }
}

TEST(Prior, CovarianceScaling) {
  const PriorConfig c;
  const Matrix12d Q1 = prior_covariance(c, 1.0), Q2 = prior_covariance(c, 2.0);
  EXPECT_NEAR(Q2(0, 0), 8.0 * Q1(0, 0), 1e-12);
  EXPECT_NEAR(Q2(0, 6), 4.0 * Q1(0, 6), 1e-12);
  EXPECT_NEAR(Q2(6, 6), 2.0 * Q1(6, 6), 1e-12);
  EXPECT_NEAR(Q1(0, 0), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(Q1(0, 6), 0.5, 1e-15);
  EXPECT_EQ(Q1(0, 1), 0.0);
}

TEST(Prior, CovarianceIsSpd) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 20; ++i) {
    const Matrix12d Q = prior_covariance(random_config(rng), 0.01 + i * 0.1);
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<Matrix12d>(Q).eigenvalues().minCoeff(), 0.0);
  }
}
