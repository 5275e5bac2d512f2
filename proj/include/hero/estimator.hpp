/**
 * \file estimator.hpp
 * \brief Sliding-window Gauss-Newton solver (the E-step) and the variational loss.
 */
#pragma once

#include <Eigen/Core>
#include <vector>

#include "hero/prior.hpp"

namespace hero {

/** \brief w states; the first pose is the locked reference frame */
struct WindowState {
  std::vector<double> times;
  std::vector<StateVar> states;

  std::size_t size() const { return states.size(); }
  /** \brief Throws std::invalid_argument unless w >= 2 and times strictly increase */
  void validate() const;
};

/**
 * \brief One keypoint correspondence: z observed in window frame `frame`,
 *        r its match expressed in the reference frame.
 */
struct MeasurementFactor {
  Eigen::Vector4d z = Eigen::Vector4d::UnitW();
  Eigen::Vector4d r = Eigen::Vector4d::UnitW();
  Eigen::Matrix3d W = Eigen::Matrix3d::Identity();
  int frame = 1;
};

/** \brief e = D (z - T_k T_tau^-1 r) */
Eigen::Vector3d measurement_error(const Pose& reference, const Pose& frame_pose, const MeasurementFactor& f);

/** \brief Geman-McClure IRLS weight 1 / (1 + e^T W e)^2 */
double robust_weight(const Eigen::Vector3d& e, const Eigen::Matrix3d& W);

struct SolverOptions {
  int max_iterations = 20;
  double tolerance = 1e-6;   ///< on the update norm
  int max_halvings = 8;      ///< back-tracking line search
  int max_increases = 5;     ///< consecutive failed iterations before SolverDiverged
  bool robust = true;        ///< Geman-McClure on measurement factors
};

struct Posterior {
  WindowState mean;
  Eigen::MatrixXd information;  ///< Gauss-Newton information over the unlocked variables
  std::vector<Eigen::MatrixXd> marginal_covariances;  ///< velocity of frame 0, then (pose, velocity) per frame
  double log_det_information = 0.0;  ///< -inf when the information is singular
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
};

/** \brief Index of the first unlocked variable of window frame k (frame 0 has velocity only) */
inline int state_offset(int k) { return k == 0 ? 0 : 6 + 12 * (k - 1); }
inline int num_variables(int w) { return 6 + 12 * (w - 1); }

/**
 * \brief Gauss-Newton with Geman-McClure reweighting and a halving line search.
 *
 * Throws SolverDiverged after max_increases consecutive iterations without a
 * cost decrease (or on a non-finite cost) and SingularSystem when the normal
 * equations are not positive definite with a non-zero gradient.
 */
Posterior solve_window(const WindowState& initial, const PriorConfig& prior,
                       const std::vector<MeasurementFactor>& meas, const SolverOptions& opts = {});

/** \brief Robust (or plain) window cost; used by the line search */
double window_cost(const WindowState& state, const PriorConfig& prior, const std::vector<MeasurementFactor>& meas,
                   bool robust);

/** \brief Components of V = E_q[phi] + 1/2 ln|Sigma^-1| with the expectation taken at the mean */
struct EsgviLoss {
  double prior = 0.0;        ///< sum of 1/2 e^T Q^-1 e
  double measurement = 0.0;  ///< sum of 1/2 e^T W e - ln|W|
  double log_det = 0.0;      ///< 1/2 ln|Sigma^-1|
  double total() const { return prior + measurement + log_det; }
};

EsgviLoss esgvi_loss(const Posterior& posterior, const PriorConfig& prior, const std::vector<MeasurementFactor>& meas);

}  // namespace hero
