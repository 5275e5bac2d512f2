// Shared helpers for the unit tests.
#pragma once

#include <Eigen/Core>
#include <random>

#include "hero/lie.hpp"
#include "hero/scan.hpp"

namespace hero::test {

inline Twist random_twist(std::mt19937_64& rng, double max_angle, double max_trans = 2.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Twist t;
  for (int i = 0; i < 3; ++i) t(i) = max_trans * u(rng);
  Eigen::Vector3d axis(u(rng), u(rng), u(rng));
  if (axis.norm() < 1e-3) axis = Eigen::Vector3d::UnitZ();
  t.tail<3>() = axis.normalized() * max_angle * std::abs(u(rng));
  return t;
}

inline Twist random_planar_twist(std::mt19937_64& rng, double max_angle, double max_trans) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Twist t = Twist::Zero();
  t(0) = max_trans * u(rng);
  t(1) = max_trans * u(rng);
  t(5) = max_angle * u(rng);
  return t;
}

inline Pose random_pose(std::mt19937_64& rng, double max_angle = 2.5, double max_trans = 5.0) {
  return lie::exp_map(random_twist(rng, max_angle, max_trans));
}

/** \brief Scan with uniform random intensities in [0, 1) */
inline PolarScan random_scan(std::mt19937_64& rng, int A, int B, double rr) {
  PolarScan s;
  s.azimuths.resize(A);
  for (int a = 0; a < A; ++a) s.azimuths[a] = 2.0 * M_PI * a / A;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  s.intensities.resize(A, B);
  for (int a = 0; a < A; ++a)
    for (int b = 0; b < B; ++b) s.intensities(a, b) = u(rng);
  s.range_resolution = rr;
  return s;
}

inline PolarScan zero_scan(int A, int B, double rr) {
  PolarScan s;
  s.azimuths.resize(A);
  for (int a = 0; a < A; ++a) s.azimuths[a] = 2.0 * M_PI * a / A;
  s.intensities = Grid::Zero(A, B);
  s.range_resolution = rr;
  return s;
}

}  // namespace hero::test
