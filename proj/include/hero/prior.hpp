/**
 * \file prior.hpp
 * \brief White-noise-on-acceleration motion prior between consecutive states.
 *
 * With xi = log(T_next T_prev^-1) the error is
 *
 *   e = [ xi - dt * w_prev ; J^-1(xi) * w_next - w_prev ]
 *
 * and its covariance Q_k = [dt^3/3 Qc, dt^2/2 Qc; dt^2/2 Qc, dt Qc].
 * Jacobians are wrt left pose perturbations T <- exp(d^) T and additive
 * velocity perturbations.
 */
#pragma once

#include <Eigen/Core>

#include "hero/lie.hpp"

namespace hero {

using Vector12d = Eigen::Matrix<double, 12, 1>;
using Matrix12d = Eigen::Matrix<double, 12, 12>;

/** \brief Diagonal power spectral density of the acceleration noise */
struct PriorConfig {
  Twist qc_diag = (Twist() << 1.0, 1.0, 1.0, 0.1, 0.1, 0.1).finished();

  /** \brief Throws std::invalid_argument unless every entry is positive and finite */
  void validate() const;
};

/** \brief Pose T_{k,0} and body-centric velocity at one timestamp */
struct StateVar {
  Pose pose;
  Twist velocity = Twist::Zero();
};

struct PriorFactor {
  Vector12d error;
  Matrix12d information;
  Matrix12d jac_prev;  ///< wrt [d pose_prev; d velocity_prev]
  Matrix12d jac_next;  ///< wrt [d pose_next; d velocity_next]
};

/** \brief Throws AngleNearPi through log_map */
Vector12d prior_error(const StateVar& prev, const StateVar& next, double dt);

Matrix12d prior_covariance(const PriorConfig& cfg, double dt);

/** \brief Q_k^-1 in closed form */
Matrix12d prior_information(const PriorConfig& cfg, double dt);

PriorFactor make_prior_factor(const StateVar& prev, const StateVar& next, double dt, const PriorConfig& cfg);

/** \brief d(J^-1(xi) w) / d xi, exact */
Matrix6d jinv_times_vector_jacobian(const Twist& xi, const Twist& w);

}  // namespace hero
