/**
 * \file frontend.hpp
 * \brief Glue between dense network outputs and the window estimator:
 *        projection, feature construction, reference matching and the
 *        measurement part of the training loss with its adjoints.
 */
#pragma once

#include <vector>

#include "hero/estimator.hpp"
#include "hero/keypoints.hpp"
#include "hero/scan.hpp"

namespace hero {

struct FrontendConfig {
  int image_size = 640;        ///< Cartesian side, pixels
  double resolution = 0.2592;  ///< m / pixel
  double beta = 3.0;           ///< azimuth mask multiple
  double min_valid_ratio = 0.05;
  double weight_c = 1e4;
  WeightModel weight_model = WeightModel::kLdl;
  bool use_mask = true;  ///< false: every cell yields a keypoint
  bool normalize_descriptors = false;

  FeatureOptions feature_options() const { return {resolution, weight_c, weight_model, normalize_descriptors}; }
};

CartesianImage project_scan(const PolarScan& scan, const FrontendConfig& cfg);

/** \brief Cell validity from the image mask, or all cells when masking is disabled */
std::vector<bool> valid_cells(const CartesianImage& img, int cell_size, const FrontendConfig& cfg);

/** \brief Measurement factors of a window; frame 0 is the reference */
struct WindowMatches {
  std::vector<MeasurementFactor> factors;
  std::vector<int> source;  ///< keypoint index within factors[i].frame
  std::vector<Match> matches;
};

/**
 * \brief Matches every keypoint of frames 1..w-1 against the keypoints of frame 0.
 *
 * When keep is non-null only source keypoints with keep[k][l] true are used.
 */
WindowMatches match_window(const std::vector<const FeatureSet*>& frames, double temperature,
                           const std::vector<std::vector<bool>>* keep = nullptr);

struct MStepResult {
  double loss = 0.0;  ///< sum over gated factors of 1/2 e^T W e - ln|W|
  int inliers = 0;
  std::vector<FeatureGrad> grads;  ///< one per frame
};

/**
 * \brief Measurement loss at fixed poses and its adjoints on every frame's features.
 *
 * Factors with e^T W e > alpha are excluded from loss and gradient; alpha <= 0
 * disables the gate. Poses are taken from mean and are treated as constants.
 */
MStepResult mstep_measurement(const std::vector<const FeatureSet*>& frames, const WindowMatches& wm,
                              const WindowState& mean, double alpha, double temperature, const FrontendConfig& cfg);

}  // namespace hero
