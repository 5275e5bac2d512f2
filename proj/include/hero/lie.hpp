/**
 * \file lie.hpp
 * \brief SE(3) Lie group math: wedge/vee operators, exponential and logarithm
 *        maps, adjoints and Jacobians.
 *
 * Twists are ordered (linear; angular), i.e. xi = [u; v] with
 *
 *   xi^ = [v^  u]
 *         [0^T 0]
 */
#pragma once

#include <Eigen/Core>
#include <cmath>

namespace hero {

using Twist = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

/** \brief Rigid transform in SE(3), stored as a 4x4 homogeneous matrix */
class Pose {
 public:
  Pose() : T_(Eigen::Matrix4d::Identity()) {}

  /** \brief Wraps a matrix; throws std::invalid_argument if it is not a valid transform */
  explicit Pose(const Eigen::Matrix4d& T);

  static Pose identity() { return Pose(); }
  static Pose from_rotation_translation(const Eigen::Matrix3d& C, const Eigen::Vector3d& r);
  /** \brief Planar pose: rotation by yaw about z, translation (x, y, 0) */
  static Pose planar(double x, double y, double yaw);

  const Eigen::Matrix4d& matrix() const { return T_; }
  Eigen::Matrix3d rotation() const { return T_.topLeftCorner<3, 3>(); }
  Eigen::Vector3d translation() const { return T_.topRightCorner<3, 1>(); }

  Pose inverse() const;
  Pose operator*(const Pose& other) const;

  /** \brief True when the rotation block is orthonormal with det > 0 and the bottom row is exact */
  static bool is_valid(const Eigen::Matrix4d& T, double tol = 1e-9);

  bool operator==(const Pose& other) const { return T_ == other.T_; }

  /** \brief Wraps a matrix the caller already knows to be a valid transform */
  static Pose unchecked(const Eigen::Matrix4d& T) {
    Pose p;
    p.T_ = T;
    return p;
  }

 private:
  Eigen::Matrix4d T_;
};

namespace lie {

/** \brief 3x3 skew-symmetric matrix such that hat(a) * b = a x b */
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> hat(const Eigen::Matrix<Scalar, 3, 1>& v) {
  Eigen::Matrix<Scalar, 3, 3> m;
  // clang-format off
  m << Scalar(0), -v(2),      v(1),
       v(2),      Scalar(0), -v(0),
      -v(1),      v(0),       Scalar(0);
  // clang-format on
  return m;
}

Eigen::Vector3d vee(const Eigen::Matrix3d& m);

/** \brief The 4x4 Lie algebra matrix of a twist */
Eigen::Matrix4d wedge(const Twist& xi);

/** \brief 6x6 "curly hat" (adjoint of the algebra element) */
template <typename Scalar>
Eigen::Matrix<Scalar, 6, 6> curlyhat(const Eigen::Matrix<Scalar, 6, 1>& xi) {
  Eigen::Matrix<Scalar, 6, 6> m = Eigen::Matrix<Scalar, 6, 6>::Zero();
  const Eigen::Matrix<Scalar, 3, 1> u = xi.template head<3>();
  const Eigen::Matrix<Scalar, 3, 1> v = xi.template tail<3>();
  m.template topLeftCorner<3, 3>() = hat<Scalar>(v);
  m.template bottomRightCorner<3, 3>() = hat<Scalar>(v);
  m.template topRightCorner<3, 3>() = hat<Scalar>(u);
  return m;
}

/** \brief 6x6 adjoint of a transform: Ad(T) xi = (T xi^ T^-1)^vee */
Matrix6d adjoint(const Pose& T);

/** \brief 4x6 point operator such that xi^ p = odot(p) xi */
Eigen::Matrix<double, 4, 6> odot(const Eigen::Vector4d& p);

Pose exp_map(const Twist& xi);

/** \brief Throws AngleNearPi when the rotation angle is within 1e-6 of pi */
Twist log_map(const Pose& T);

Eigen::Vector4d transform_point(const Pose& T, const Eigen::Vector4d& p);

/** \brief Rotation matrix of an axis-angle vector */
Eigen::Matrix3d so3_exp(const Eigen::Vector3d& phi);

/** \brief Axis-angle vector of a rotation matrix (angle in [0, pi]) */
Eigen::Vector3d so3_log(const Eigen::Matrix3d& C);

namespace detail {

// Series-safe trigonometric coefficients. Below the cutoff the Taylor
// expansions are used; truncation error is O(theta^6) there.
constexpr double kSeriesCutoff = 1e-3;

template <typename Scalar>
Scalar sq_norm3(const Eigen::Matrix<Scalar, 3, 1>& v) {
  return v(0) * v(0) + v(1) * v(1) + v(2) * v(2);
}

// (1 - cos t) / t^2
template <typename Scalar>
Scalar coeff_a(const Scalar& t2) {
  using std::cos;
  using std::sqrt;
  if (t2 < Scalar(kSeriesCutoff * kSeriesCutoff))
    return Scalar(0.5) - t2 / Scalar(24) + t2 * t2 / Scalar(720);
  const Scalar t = sqrt(t2);
  return (Scalar(1) - cos(t)) / t2;
}

// (t - sin t) / t^3
template <typename Scalar>
Scalar coeff_b(const Scalar& t2) {
  using std::sin;
  using std::sqrt;
  if (t2 < Scalar(kSeriesCutoff * kSeriesCutoff))
    return Scalar(1.0 / 6.0) - t2 / Scalar(120) + t2 * t2 / Scalar(5040);
  const Scalar t = sqrt(t2);
  return (t - sin(t)) / (t2 * t);
}

// (t^2 + 2 cos t - 2) / (2 t^4)
template <typename Scalar>
Scalar coeff_c(const Scalar& t2) {
  using std::cos;
  using std::sqrt;
  if (t2 < Scalar(kSeriesCutoff * kSeriesCutoff))
    return Scalar(1.0 / 24.0) - t2 / Scalar(720) + t2 * t2 / Scalar(40320);
  const Scalar t = sqrt(t2);
  return (t2 + Scalar(2) * cos(t) - Scalar(2)) / (Scalar(2) * t2 * t2);
}

// (2 t - 3 sin t + t cos t) / (2 t^5)
template <typename Scalar>
Scalar coeff_d(const Scalar& t2) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  if (t2 < Scalar(1e-2))
    return Scalar(1.0 / 120.0) - t2 / Scalar(2520) + t2 * t2 / Scalar(120960);
  const Scalar t = sqrt(t2);
  return (Scalar(2) * t - Scalar(3) * sin(t) + t * cos(t)) / (Scalar(2) * t2 * t2 * t);
}

// (1 - (t/2) cot(t/2)) / t^2
template <typename Scalar>
Scalar coeff_e(const Scalar& t2) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  if (t2 < Scalar(kSeriesCutoff * kSeriesCutoff))
    return Scalar(1.0 / 12.0) + t2 / Scalar(720) + t2 * t2 / Scalar(30240);
  const Scalar t = sqrt(t2);
  const Scalar h = t / Scalar(2);
  return (Scalar(1) - h * cos(h) / sin(h)) / t2;
}

}  // namespace detail

/** \brief Left Jacobian of SO(3) */
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> so3_left_jacobian(const Eigen::Matrix<Scalar, 3, 1>& phi) {
  const Scalar t2 = detail::sq_norm3(phi);
  const Eigen::Matrix<Scalar, 3, 3> P = hat<Scalar>(phi);
  return Eigen::Matrix<Scalar, 3, 3>::Identity() + detail::coeff_a(t2) * P +
         detail::coeff_b(t2) * P * P;
}

/** \brief Inverse left Jacobian of SO(3) */
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> so3_left_jacobian_inverse(const Eigen::Matrix<Scalar, 3, 1>& phi) {
  const Scalar t2 = detail::sq_norm3(phi);
  const Eigen::Matrix<Scalar, 3, 3> P = hat<Scalar>(phi);
  return Eigen::Matrix<Scalar, 3, 3>::Identity() - Scalar(0.5) * P + detail::coeff_e(t2) * P * P;
}

/** \brief The Q block coupling translation and rotation in the SE(3) left Jacobian */
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> se3_q_matrix(const Eigen::Matrix<Scalar, 6, 1>& xi) {
  const Eigen::Matrix<Scalar, 3, 1> u = xi.template head<3>();
  const Eigen::Matrix<Scalar, 3, 1> v = xi.template tail<3>();
  const Scalar t2 = detail::sq_norm3(v);
  const Eigen::Matrix<Scalar, 3, 3> U = hat<Scalar>(u);
  const Eigen::Matrix<Scalar, 3, 3> V = hat<Scalar>(v);
  const Eigen::Matrix<Scalar, 3, 3> VU = V * U;
  const Eigen::Matrix<Scalar, 3, 3> UV = U * V;
  const Eigen::Matrix<Scalar, 3, 3> VUV = VU * V;
  return Scalar(0.5) * U + detail::coeff_b(t2) * (VU + UV + VUV) +
         detail::coeff_c(t2) * (V * VU + UV * V - Scalar(3) * VUV) +
         detail::coeff_d(t2) * (VUV * V + V * VUV);
}

/** \brief Left Jacobian of SE(3): exp((xi + d)^) ~= exp((J d)^) exp(xi^) */
template <typename Scalar>
Eigen::Matrix<Scalar, 6, 6> left_jacobian(const Eigen::Matrix<Scalar, 6, 1>& xi) {
  const Eigen::Matrix<Scalar, 3, 1> v = xi.template tail<3>();
  const Eigen::Matrix<Scalar, 3, 3> J = so3_left_jacobian<Scalar>(v);
  Eigen::Matrix<Scalar, 6, 6> out = Eigen::Matrix<Scalar, 6, 6>::Zero();
  out.template topLeftCorner<3, 3>() = J;
  out.template bottomRightCorner<3, 3>() = J;
  out.template topRightCorner<3, 3>() = se3_q_matrix<Scalar>(xi);
  return out;
}

/** \brief Inverse of left_jacobian, in closed form */
template <typename Scalar>
Eigen::Matrix<Scalar, 6, 6> left_jacobian_inverse(const Eigen::Matrix<Scalar, 6, 1>& xi) {
  const Eigen::Matrix<Scalar, 3, 1> v = xi.template tail<3>();
  const Eigen::Matrix<Scalar, 3, 3> Ji = so3_left_jacobian_inverse<Scalar>(v);
  Eigen::Matrix<Scalar, 6, 6> out = Eigen::Matrix<Scalar, 6, 6>::Zero();
  out.template topLeftCorner<3, 3>() = Ji;
  out.template bottomRightCorner<3, 3>() = Ji;
  out.template topRightCorner<3, 3>() = -Ji * se3_q_matrix<Scalar>(xi) * Ji;
  return out;
}

}  // namespace lie

}  // namespace hero
