#include <gtest/gtest.h>

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <algorithm>

#include "hero/error.hpp"
#include "hero/estimator.hpp"
#include "hero/simworld.hpp"
#include "support.hpp"

using namespace hero;

namespace {

World test_world(std::uint64_t seed, int count = 50) {
  return World::random(seed, count, Eigen::Vector2d::Zero(), Eigen::Vector2d(40.0, 40.0));
}

std::vector<MeasurementFactor> to_factors(const std::vector<OracleCorrespondence>& c, int frame = 1) {
  std::vector<MeasurementFactor> out;
  for (const auto& o : c) out.push_back({o.z, o.r, o.W, frame});
  return out;
}

WindowState two_frames(const Pose& ref, const Pose& guess) {
  WindowState s;
  s.times = {0.0, 0.25};
  s.states = {{ref, Twist::Zero()}, {guess, Twist::Zero()}};
  return s;
}

struct PoseError {
  double translation, rotation;
};

PoseError relative_error(const Pose& est, const Pose& truth) {
  const Pose d = est * truth.inverse();
  const Eigen::AngleAxisd aa(d.rotation());
  return {d.translation().norm(), std::abs(aa.angle())};
}

}  // namespace

TEST(Measurement, ErrorMatchesExplicitComposition) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    const Pose ref = test::random_pose(rng), k = test::random_pose(rng);
    MeasurementFactor f;
    f.z << test::random_twist(rng, 0.0, 5.0).head<3>(), 1.0;
    f.r << test::random_twist(rng, 0.0, 5.0).head<3>(), 1.0;
    const Eigen::Vector4d q = k.matrix() * ref.matrix().inverse() * f.r;
    EXPECT_LT((measurement_error(ref, k, f) - (f.z - q).head<3>()).norm(), 1e-12);
  }
}

TEST(Measurement, ConsistentPointHasZeroError) {
  const Pose ref = Pose::planar(1.0, 2.0, 0.3), k = Pose::planar(-3.0, 0.5, -0.2);
  const Eigen::Vector4d p(4.0, -7.0, 0.0, 1.0);
  MeasurementFactor f;
  f.r = ref.matrix() * p;
  f.z = k.matrix() * p;
  EXPECT_LT(measurement_error(ref, k, f).norm(), 1e-12);
}

TEST(Robust, WeightExamples) {
  const Eigen::Matrix3d I = Eigen::Matrix3d::Identity();
  EXPECT_EQ(robust_weight(Eigen::Vector3d::Zero(), I), 1.0);
  EXPECT_NEAR(robust_weight(Eigen::Vector3d(1, 0, 0), I), 0.25, 1e-15);
  EXPECT_NEAR(robust_weight(Eigen::Vector3d(0, 1, 0), 3.0 * I), 1.0 / 16.0, 1e-15);
  EXPECT_LT(robust_weight(Eigen::Vector3d(100, 0, 0), I), 1e-7);
}

TEST(Solve, NoiselessCorrespondencesRecoverPoseExactly) {
  std::mt19937_64 rng(2);
  const World w = test_world(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Pose a = Pose::planar(0.0, 0.0, 0.0);
    const Pose b = lie::exp_map(test::random_planar_twist(rng, 0.2, 2.0));
    const auto meas = to_factors(oracle_correspondences(w, a, b, 0.0, 80.0, trial));
    ASSERT_GT(meas.size(), 10u);
    const Posterior p = solve_window(two_frames(a, a), PriorConfig{}, meas);
    const PoseError e = relative_error(p.mean.states[1].pose, b);
    EXPECT_LT(e.translation, 1e-6);
    EXPECT_LT(e.rotation, 1e-8);
    EXPECT_TRUE(p.converged);
  }
}

TEST(Solve, NonIdentityReference) {
  std::mt19937_64 rng(3);
  const World w = test_world(4);
  const Pose a = Pose::planar(3.0, -2.0, 0.4);
  const Pose b = lie::exp_map(test::random_planar_twist(rng, 0.2, 2.0)) * a;
  const auto meas = to_factors(oracle_correspondences(w, a, b, 0.0, 80.0, 1));
  const Posterior p = solve_window(two_frames(a, a), PriorConfig{}, meas);
  const PoseError e = relative_error(p.mean.states[1].pose * a.inverse(), b * a.inverse());
  EXPECT_LT(e.translation, 1e-6);
  EXPECT_LT(e.rotation, 1e-8);
}

TEST(Solve, GrossOutliersAreSuppressed) {
  std::mt19937_64 rng(4);
  const World w = test_world(5, 80);
  std::uniform_real_distribution<double> mag(10.0, 30.0), ang(-M_PI, M_PI);
  for (int trial = 0; trial < 5; ++trial) {
    const Pose a;
    const Pose b = lie::exp_map(test::random_planar_twist(rng, 0.1, 1.5));
    auto meas = to_factors(oracle_correspondences(w, a, b, 0.0, 80.0, trial));
    const std::size_t n_out = meas.size() / 5;
    for (std::size_t i = 0; i < n_out; ++i) {
      const double m = mag(rng), t = ang(rng);
      meas[i].z += Eigen::Vector4d(m * std::cos(t), m * std::sin(t), 0.0, 0.0);
    }
    const Posterior p = solve_window(two_frames(a, a), PriorConfig{}, meas);
    EXPECT_LT(relative_error(p.mean.states[1].pose, b).translation, 1e-3);
  }
}

TEST(Solve, FactorOrderDoesNotMatter) {
  std::mt19937_64 rng(5);
  const World w = test_world(6);
  const Pose b = lie::exp_map(test::random_planar_twist(rng, 0.1, 1.5));
  auto meas = to_factors(oracle_correspondences(w, Pose(), b, 0.05, 80.0, 9));
  const Posterior p1 = solve_window(two_frames(Pose(), Pose()), PriorConfig{}, meas);
  std::shuffle(meas.begin(), meas.end(), rng);
  const Posterior p2 = solve_window(two_frames(Pose(), Pose()), PriorConfig{}, meas);
  EXPECT_LT((p1.mean.states[1].pose.matrix() - p2.mean.states[1].pose.matrix()).norm(), 1e-10);
  EXPECT_LT((p1.mean.states[1].velocity - p2.mean.states[1].velocity).norm(), 1e-10);
}

TEST(Solve, ReferencePoseIsLocked) {
  std::mt19937_64 rng(6);
  const World w = test_world(7);
  const Pose a = test::random_pose(rng, 0.3, 2.0);
  const Pose b = lie::exp_map(test::random_planar_twist(rng, 0.1, 1.5)) * a;
  const auto meas = to_factors(oracle_correspondences(w, a, b, 0.05, 80.0, 2));
  const Posterior p = solve_window(two_frames(a, a), PriorConfig{}, meas);
  EXPECT_TRUE(p.mean.states[0].pose == a);
}

TEST(Solve, PlanarInputsStayPlanar) {
  std::mt19937_64 rng(7);
  const World w = test_world(8);
  WindowState s;
  std::vector<MeasurementFactor> meas;
  Pose truth;
  for (int k = 0; k < 4; ++k) {
    s.times.push_back(0.25 * k);
    s.states.push_back({Pose(), Twist::Zero()});
    if (k > 0) {
      truth = lie::exp_map(test::random_planar_twist(rng, 0.05, 1.0)) * truth;
      const auto f = to_factors(oracle_correspondences(w, Pose(), truth, 0.05, 80.0, k), k);
      meas.insert(meas.end(), f.begin(), f.end());
    }
  }
  const Posterior p = solve_window(s, PriorConfig{}, meas);
  for (const StateVar& st : p.mean.states) {
    const Eigen::Matrix4d& T = st.pose.matrix();
    EXPECT_LT(std::abs(T(2, 3)), 1e-9);
    EXPECT_LT(std::abs(T(0, 2)) + std::abs(T(1, 2)) + std::abs(T(2, 0)) + std::abs(T(2, 1)), 1e-9);
    EXPECT_LT(std::abs(st.velocity(2)) + std::abs(st.velocity(3)) + std::abs(st.velocity(4)), 1e-9);
  }
}

TEST(Solve, PriorOnlyConsistentWindowConvergesImmediately) {
  WindowState s;
  Twist v = Twist::Zero();
  v(0) = -2.0;
  v(5) = 0.1;
  for (int k = 0; k < 3; ++k) {
    s.times.push_back(0.25 * k);
    s.states.push_back({lie::exp_map(0.25 * k * v), v});
  }
  const Posterior p = solve_window(s, PriorConfig{}, {});
  EXPECT_EQ(p.iterations, 1);
  EXPECT_TRUE(p.converged);
  EXPECT_LT(p.cost, 1e-16);
}

TEST(Solve, PriorOnlyInconsistentWindowIsSingular) {
  WindowState s;
  for (int k = 0; k < 4; ++k) {
    s.times.push_back(0.25 * k);
    s.states.push_back({Pose::planar(0.3 * k * k, 0.0, 0.02 * k), Twist::Zero()});
  }
  // Without measurements there are six more unknowns than prior residuals.
  EXPECT_THROW(solve_window(s, PriorConfig{}, {}), SingularSystem);
}

TEST(Solve, InvalidInputsThrow) {
  WindowState s = two_frames(Pose(), Pose());
  MeasurementFactor f;
  f.frame = 0;
  EXPECT_THROW(solve_window(s, PriorConfig{}, {f}), std::invalid_argument);
  f.frame = 2;
  EXPECT_THROW(solve_window(s, PriorConfig{}, {f}), std::invalid_argument);
  s.times[1] = 0.0;
  EXPECT_THROW(solve_window(s, PriorConfig{}, {}), std::invalid_argument);
  s.states.pop_back();
  s.times.pop_back();
  EXPECT_THROW(solve_window(s, PriorConfig{}, {}), std::invalid_argument);
}

TEST(Solve, CovarianceLayout) {
  const World w = test_world(9);
  const Pose b = Pose::planar(1.0, 0.2, 0.05);
  const auto meas = to_factors(oracle_correspondences(w, Pose(), b, 0.05, 80.0, 3));
  WindowState s = two_frames(Pose(), Pose());
  s.times.push_back(0.5);
  s.states.push_back({Pose(), Twist::Zero()});
  const Posterior p = solve_window(s, PriorConfig{}, meas);
  ASSERT_EQ(p.marginal_covariances.size(), 3u);
  EXPECT_EQ(p.marginal_covariances[0].rows(), 6);
  EXPECT_EQ(p.marginal_covariances[1].rows(), 12);
  EXPECT_EQ(p.information.rows(), num_variables(3));
  EXPECT_NEAR(p.log_det_information, std::log(p.information.determinant()), 1e-6 * std::abs(p.log_det_information));
}

TEST(Esgvi, ExampleWithoutMeasurements) {
  Posterior p;
  p.mean = two_frames(Pose(), Pose::planar(1.0, 0.0, 0.0));
  p.log_det_information = 4.0;
  PriorConfig c;
  c.qc_diag.setOnes();
  // xi = (1, 0, ...), velocities zero: 1/2 * 12 / dt^3 with dt = 0.25.
  const EsgviLoss l = esgvi_loss(p, c, {});
  EXPECT_NEAR(l.prior, 0.5 * 12.0 / (0.25 * 0.25 * 0.25), 1e-9);
  EXPECT_EQ(l.measurement, 0.0);
  EXPECT_EQ(l.log_det, 2.0);
  EXPECT_NEAR(l.total(), l.prior + 2.0, 1e-12);
}

TEST(Esgvi, MeasurementTermMatchesDirectSum) {
  std::mt19937_64 rng(8);
  Posterior p;
  p.mean = two_frames(Pose::planar(0.5, 0.1, 0.2), Pose::planar(1.0, -0.3, 0.1));
  std::vector<MeasurementFactor> meas;
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int i = 0; i < 20; ++i) {
    MeasurementFactor f;
    f.z << u(rng), u(rng), 0.0, 1.0;
    f.r << u(rng), u(rng), 0.0, 1.0;
    f.W = Eigen::Vector3d(1.0 + std::abs(u(rng)), 2.0, 100.0).asDiagonal();
    meas.push_back(f);
  }
  double oracle = 0.0;
  for (const auto& f : meas) {
    const Eigen::Vector4d q = p.mean.states[1].pose.matrix() * p.mean.states[0].pose.inverse().matrix() * f.r;
    const Eigen::Vector3d e = (f.z - q).head<3>();
    oracle += 0.5 * e.dot(f.W * e) - std::log(f.W(0, 0) * f.W(1, 1) * f.W(2, 2));
  }
  EXPECT_NEAR(esgvi_loss(p, PriorConfig{}, meas).measurement, oracle, 1e-9 * std::abs(oracle));
}
