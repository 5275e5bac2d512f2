/**
 * \file prior.cpp
 * \brief Motion prior error, covariance and Jacobians.
 */
#include "hero/prior.hpp"

#include <cmath>
#include <stdexcept>

#include <unsupported/Eigen/AutoDiff>

namespace hero {

void PriorConfig::validate() const {
  for (int i = 0; i < 6; ++i)
    if (!(qc_diag(i) > 0.0) || !std::isfinite(qc_diag(i)))
      throw std::invalid_argument("PriorConfig: Qc entries must be positive and finite");
}

Vector12d prior_error(const StateVar& prev, const StateVar& next, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("prior_error: dt must be positive");
  const Twist xi = lie::log_map(next.pose * prev.pose.inverse());
  Vector12d e;
  e.head<6>() = xi - dt * prev.velocity;
  e.tail<6>() = lie::left_jacobian_inverse<double>(xi) * next.velocity - prev.velocity;
  return e;
}

Matrix12d prior_covariance(const PriorConfig& cfg, double dt) {
  const Matrix6d Qc = cfg.qc_diag.asDiagonal();
  Matrix12d Q;
  Q << dt * dt * dt / 3.0 * Qc, dt * dt / 2.0 * Qc, dt * dt / 2.0 * Qc, dt * Qc;
  return Q;
}

Matrix12d prior_information(const PriorConfig& cfg, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("prior_information: dt must be positive");
  cfg.validate();
  const Matrix6d Qi = cfg.qc_diag.cwiseInverse().asDiagonal();
  Matrix12d P;
  P << 12.0 / (dt * dt * dt) * Qi, -6.0 / (dt * dt) * Qi, -6.0 / (dt * dt) * Qi, 4.0 / dt * Qi;
  return P;
}

Matrix6d jinv_times_vector_jacobian(const Twist& xi, const Twist& w) {
  using AD = Eigen::AutoDiffScalar<Eigen::Matrix<double, 6, 1>>;
  Eigen::Matrix<AD, 6, 1> x;
  for (int i = 0; i < 6; ++i) x(i) = AD(xi(i), 6, i);
  const Eigen::Matrix<AD, 6, 6> Ji = lie::left_jacobian_inverse<AD>(x);
  Matrix6d M;
  for (int r = 0; r < 6; ++r) {
    AD acc(0.0);
    for (int c = 0; c < 6; ++c) acc += Ji(r, c) * w(c);
    if (acc.derivatives().size() == 0)
      M.row(r).setZero();
    else
      M.row(r) = acc.derivatives().transpose();
  }
  return M;
}

PriorFactor make_prior_factor(const StateVar& prev, const StateVar& next, double dt, const PriorConfig& cfg) {
  PriorFactor f;
  const Pose rel = next.pose * prev.pose.inverse();
  const Twist xi = lie::log_map(rel);
  const Matrix6d Ji = lie::left_jacobian_inverse<double>(xi);
  f.error.head<6>() = xi - dt * prev.velocity;
  f.error.tail<6>() = Ji * next.velocity - prev.velocity;
  f.information = prior_information(cfg, dt);

  const Matrix6d M = jinv_times_vector_jacobian(xi, next.velocity);
  const Matrix6d dxi_dnext = Ji;
  const Matrix6d dxi_dprev = -Ji * lie::adjoint(rel);
  const Matrix6d I = Matrix6d::Identity();

  f.jac_next.setZero();
  f.jac_next.topLeftCorner<6, 6>() = dxi_dnext;
  f.jac_next.bottomLeftCorner<6, 6>() = M * dxi_dnext;
  f.jac_next.bottomRightCorner<6, 6>() = Ji;

  f.jac_prev.setZero();
  f.jac_prev.topLeftCorner<6, 6>() = dxi_dprev;
  f.jac_prev.topRightCorner<6, 6>() = -dt * I;
  f.jac_prev.bottomLeftCorner<6, 6>() = M * dxi_dprev;
  f.jac_prev.bottomRightCorner<6, 6>() = -I;
  return f;
}

}  // namespace hero
