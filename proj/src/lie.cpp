/**
 * \file lie.cpp
 * \brief SE(3) exponential/logarithm maps and helpers.
 */
#include "hero/lie.hpp"

#include <Eigen/Dense>
#include <stdexcept>

#include "hero/error.hpp"

namespace hero {

namespace {
// Below this rotation angle the closed forms are replaced by their series.
constexpr double kSmallAngle = 1e-7;
// Matches the log_map precondition: angle < pi - 1e-6.
constexpr double kNearPiMargin = 1e-6;
}  // namespace

Pose::Pose(const Eigen::Matrix4d& T) : T_(T) {
  if (!is_valid(T)) throw std::invalid_argument("Pose: matrix is not a valid SE(3) transform");
}

Pose Pose::from_rotation_translation(const Eigen::Matrix3d& C, const Eigen::Vector3d& r) {
  Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
  T.topLeftCorner<3, 3>() = C;
  T.topRightCorner<3, 1>() = r;
  return Pose(T);
}

Pose Pose::planar(double x, double y, double yaw) {
  Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
  const double c = std::cos(yaw), s = std::sin(yaw);
  T(0, 0) = c;
  T(0, 1) = -s;
  T(1, 0) = s;
  T(1, 1) = c;
  T(0, 3) = x;
  T(1, 3) = y;
  return unchecked(T);
}

Pose Pose::inverse() const {
  Eigen::Matrix4d Ti = Eigen::Matrix4d::Identity();
  const Eigen::Matrix3d Ct = T_.topLeftCorner<3, 3>().transpose();
  Ti.topLeftCorner<3, 3>() = Ct;
  Ti.topRightCorner<3, 1>() = -Ct * T_.topRightCorner<3, 1>();
  return unchecked(Ti);
}

Pose Pose::operator*(const Pose& other) const {
  Eigen::Matrix4d T = T_ * other.T_;
  T.row(3) << 0.0, 0.0, 0.0, 1.0;
  return unchecked(T);
}

bool Pose::is_valid(const Eigen::Matrix4d& T, double tol) {
  if (!T.allFinite()) return false;
  if (T(3, 0) != 0.0 || T(3, 1) != 0.0 || T(3, 2) != 0.0 || T(3, 3) != 1.0) return false;
  const Eigen::Matrix3d C = T.topLeftCorner<3, 3>();
  if ((C.transpose() * C - Eigen::Matrix3d::Identity()).norm() >= tol) return false;
  return C.determinant() > 0.0;
}

namespace lie {

Eigen::Vector3d vee(const Eigen::Matrix3d& m) { return {m(2, 1), m(0, 2), m(1, 0)}; }

Eigen::Matrix4d wedge(const Twist& xi) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  m.topLeftCorner<3, 3>() = hat<double>(xi.tail<3>());
  m.topRightCorner<3, 1>() = xi.head<3>();
  return m;
}

Matrix6d adjoint(const Pose& T) {
  const Eigen::Matrix3d C = T.rotation();
  Matrix6d Ad = Matrix6d::Zero();
  Ad.topLeftCorner<3, 3>() = C;
  Ad.bottomRightCorner<3, 3>() = C;
  Ad.topRightCorner<3, 3>() = hat<double>(T.translation()) * C;
  return Ad;
}

Eigen::Matrix<double, 4, 6> odot(const Eigen::Vector4d& p) {
  Eigen::Matrix<double, 4, 6> m = Eigen::Matrix<double, 4, 6>::Zero();
  m.topLeftCorner<3, 3>() = p(3) * Eigen::Matrix3d::Identity();
  m.topRightCorner<3, 3>() = -hat<double>(p.head<3>());
  return m;
}

Eigen::Matrix3d so3_exp(const Eigen::Vector3d& phi) {
  const double t2 = phi.squaredNorm();
  const Eigen::Matrix3d P = hat<double>(phi);
  if (t2 < kSmallAngle * kSmallAngle) return Eigen::Matrix3d::Identity() + P + 0.5 * P * P;
  const double t = std::sqrt(t2);
  return Eigen::Matrix3d::Identity() + (std::sin(t) / t) * P + ((1.0 - std::cos(t)) / t2) * P * P;
}

Eigen::Vector3d so3_log(const Eigen::Matrix3d& C) {
  const Eigen::Vector3d w = 0.5 * vee(C - C.transpose());  // sin(t) * axis
  const double s = w.norm();
  const double c = 0.5 * (C.trace() - 1.0);
  const double t = std::atan2(s, c);
  if (t < kSmallAngle) return w;
  if (t < M_PI - 1e-3) return (t / s) * w;

  // Near pi the antisymmetric part vanishes; recover the axis from the
  // symmetric part C + C^T = 2 cos(t) I + 2 (1 - cos t) a a^T.
  const Eigen::Matrix3d B = 0.5 * (C + C.transpose()) - c * Eigen::Matrix3d::Identity();
  Eigen::Index k;
  B.diagonal().maxCoeff(&k);
  Eigen::Vector3d a = B.col(k) / std::sqrt(std::max(B(k, k), 1e-300));
  a.normalize();
  if (a.dot(w) < 0.0) a = -a;
  return t * a;
}

Pose exp_map(const Twist& xi) {
  const Eigen::Vector3d phi = xi.tail<3>();
  Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
  T.topLeftCorner<3, 3>() = so3_exp(phi);
  T.topRightCorner<3, 1>() = so3_left_jacobian<double>(phi) * xi.head<3>();
  return Pose::unchecked(T);
}

Twist log_map(const Pose& T) {
  const Eigen::Vector3d phi = so3_log(T.rotation());
  if (phi.norm() >= M_PI - kNearPiMargin)
    throw AngleNearPi("log_map: rotation angle within 1e-6 of pi");
  Twist xi;
  xi.tail<3>() = phi;
  xi.head<3>() = so3_left_jacobian_inverse<double>(phi) * T.translation();
  return xi;
}

Eigen::Vector4d transform_point(const Pose& T, const Eigen::Vector4d& p) {
  Eigen::Vector4d q = T.matrix() * p;
  q(3) = p(3);
  return q;
}

}  // namespace lie
}  // namespace hero
