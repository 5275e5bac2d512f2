/**
 * \file trainer.hpp
 * \brief Unsupervised GEM training of the feature model and sliding-window odometry.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hero/estimator.hpp"
#include "hero/evaluation.hpp"
#include "hero/frontend.hpp"
#include "hero/network.hpp"

namespace hero {

/** \brief Switches removing one component each */
struct Ablation {
  bool scalar_weight = false;    ///< W = exp(d1) blkdiag(I2, c)
  bool no_mah_gate = false;      ///< backpropagate every match
  bool no_masking = false;       ///< every cell yields a keypoint
  bool no_augmentation = false;  ///< no random rotations
  bool operator==(const Ablation&) const = default;
};

struct TrainConfig {
  int window_size = 4;
  double learning_rate = 1e-5;
  int max_iterations = 2000;
  double alpha = 16.0;  ///< Mahalanobis gate on the M-step
  double eta = 4.0;     ///< ln|R| gate at inference
  bool eta_filter = false;
  double aug_max_angle = 0.26;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  ///< 0 disables
  Ablation ablation;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/** \brief Everything the frontend, estimator and trainer need */
struct PipelineConfig {
  FrontendConfig frontend;
  PriorConfig prior;
  SolverOptions solver;
  TrainConfig train;

  /** \brief Frontend settings after applying the ablation switches */
  FrontendConfig effective_frontend() const;
};

/** \brief Adam moments */
struct OptimizerState {
  Eigen::VectorXd m, v;
  long step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  void apply(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr);
};

struct StepMetrics {
  long step = 0;
  double loss = 0.0;  ///< gated measurement loss at the posterior mean
  EsgviLoss esgvi;    ///< full loss functional at the posterior mean
  int inliers = 0;
  int factors = 0;
  double grad_norm = 0.0;
  double pose_change = 0.0;  ///< sum of |log(T_post T_init^-1)| over frames
  double wall_ms = 0.0;
  bool skipped = false;
};

/**
 * \brief Rotates the image about its centre pixel (S/2, S/2) by an angle drawn
 *        from U(-max_angle, max_angle); pixels bilinear, mask nearest.
 *        Returns the applied angle.
 */
double augment_rotation(const CartesianImage& in, double max_angle, std::mt19937_64& rng, CartesianImage& out);
/** \brief Deterministic rotation by angle */
CartesianImage rotate_image(const CartesianImage& in, double angle);

/** \brief Keeps keypoints with ln|R| >= eta, preserving order */
FeatureSet inference_filter(const FeatureSet& features, double eta);

/**
 * \brief One GEM iteration on a window of Cartesian images.
 *
 * Forward in training mode, matching against the first frame, Gauss-Newton
 * E-step, measurement-loss adjoints at the posterior mean, backprop and an
 * Adam update. On SolverDiverged or SingularSystem the window is skipped and
 * both parameters and running statistics are left unchanged.
 */
StepMetrics train_step(FeatureModel& model, const std::vector<const CartesianImage*>& window,
                       const std::vector<double>& times, const PipelineConfig& cfg, OptimizerState& opt,
                       std::mt19937_64& rng);

struct TrainOutputs {
  std::filesystem::path log_csv;         ///< empty disables
  std::filesystem::path checkpoint_dir;  ///< empty disables
  std::function<void(const StepMetrics&)> on_step;
};

/** \brief Runs cfg.train.max_iterations steps on windows sampled uniformly from the sequence */
std::vector<StepMetrics> train(FeatureModel& model, const std::vector<CartesianImage>& images,
                               const std::vector<double>& times, const PipelineConfig& cfg,
                               const TrainOutputs& outputs = {});

struct OdometryResult {
  Trajectory trajectory;  ///< T_{0,k}
  std::vector<Twist> velocities;
  std::vector<bool> dead_reckoned;
};

/** \brief Measurement factors for window frames (absolute indices); factor.frame is window-relative */
using FactorProvider = std::function<std::vector<MeasurementFactor>(const std::vector<int>& frames)>;

/**
 * \brief Generic sliding window: grows to w frames then slides by one,
 *        locking the new oldest pose. New frames start from constant-velocity
 *        extrapolation; a failed solve keeps that extrapolation and flags the frame.
 */
OdometryResult run_sliding_window(const std::vector<double>& times, int window_size, const PriorConfig& prior,
                                  const SolverOptions& solver, const FactorProvider& factors);

/** \brief Learned-frontend odometry over a projected image sequence */
OdometryResult run_odometry(const FeatureModel& model, const std::vector<CartesianImage>& images,
                            const std::vector<double>& times, const PipelineConfig& cfg);

}  // namespace hero
