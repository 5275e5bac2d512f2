/**
 * \file keypoints.hpp
 * \brief Differentiable keypoint extraction, sampling, soft matching and
 *        inverse-covariance assembly, each paired with its adjoint.
 */
#pragma once

#include <Eigen/Core>
#include <vector>

#include "hero/network.hpp"

namespace hero {

/** \brief Per-cell spatial-softmax keypoints in image coordinates (u = column, v = row) */
struct Keypoints {
  int cell_size = 0;
  int cells_per_side = 0;
  std::vector<Eigen::Vector2d> coords;
  std::vector<int> cell_ids;              ///< row-major cell index
  std::vector<Eigen::VectorXd> softmax;   ///< cell_size^2 probabilities, row-major within the cell

  std::size_t size() const { return coords.size(); }
};

/**
 * \brief One keypoint per valid cell: the softmax-weighted mean pixel coordinate.
 *
 * valid_cells is row-major over the (S / cell_size)^2 cells; invalid cells
 * yield no keypoint.
 */
Keypoints extract_keypoints(const Tensor& detector, const std::vector<bool>& valid_cells, int cell_size);

/** \brief Accumulates dLoss/d(detector) given dLoss/d(coords) */
void extract_keypoints_backward(const Keypoints& kps, const std::vector<Eigen::Vector2d>& d_coords,
                                Tensor& d_detector);

/** \brief Bilinear sample of every channel at (u, v); throws OutOfBounds outside [0, S-1]^2 */
Eigen::VectorXd sample_at(const Tensor& map, const Eigen::Vector2d& uv);

/**
 * \brief Adjoint of sample_at: scatters d_value into d_map and returns
 *        dLoss/d(uv).
 */
Eigen::Vector2d sample_at_backward(const Tensor& map, const Eigen::Vector2d& uv,
                                   const Eigen::VectorXd& d_value, Tensor& d_map);

/** \brief Image coordinates to a homogeneous metric point (x, y, 0, 1) about the image centre */
Eigen::Vector4d to_metric(const Eigen::Vector2d& uv, double resolution, int size);

/** \brief Soft reference point of one source descriptor */
struct Match {
  Eigen::Vector4d point;    ///< convex combination of reference points, last element 1
  Eigen::VectorXd weights;  ///< softmax(T * c), non-negative, sums to 1
  Eigen::VectorXd response; ///< c = ref_descriptors^T * src_descriptor
};

/**
 * \brief r = [p^1 ... p^N] softmax(T * d^T [d^1 ... d^N]).
 *
 * ref_descriptors is D x N, ref_points 4 x N. The maximum logit is subtracted
 * before exponentiation.
 */
Match match(const Eigen::VectorXd& src_descriptor, const Eigen::MatrixXd& ref_descriptors,
            const Eigen::Matrix4Xd& ref_points, double temperature);

/** \brief Adjoints of match given dLoss/d(point) */
struct MatchGrad {
  Eigen::VectorXd d_src;   ///< D
  Eigen::MatrixXd d_ref;   ///< D x N
  Eigen::Matrix4Xd d_points;
};
MatchGrad match_backward(const Match& m, const Eigen::VectorXd& src_descriptor,
                         const Eigen::MatrixXd& ref_descriptors, const Eigen::Matrix4Xd& ref_points,
                         double temperature, const Eigen::Vector4d& d_point);

/** \brief Parameterisation of the 2x2 information block */
enum class WeightModel {
  kLdl,     ///< R = L diag(exp d1, exp d2) L^T, L unit lower-triangular holding d3
  kScalar,  ///< W = exp(d1) * blkdiag(I2, c)
};

/** \brief W = blkdiag(R, c) */
Eigen::Matrix3d assemble_weight(const Eigen::Vector3d& scores, double c, WeightModel model = WeightModel::kLdl);

/** \brief ln|R| of the 2x2 block */
double log_det_r(const Eigen::Vector3d& scores, WeightModel model = WeightModel::kLdl);

/** \brief ln|W| including the third-coordinate constant */
double log_det_w(const Eigen::Vector3d& scores, double c, WeightModel model = WeightModel::kLdl);

/**
 * \brief dLoss/d(scores) for a loss with gradient dW wrt W (dW need not be
 *        symmetric) plus d_log_det times d(ln|W|)/d(scores).
 */
Eigen::Vector3d assemble_weight_backward(const Eigen::Vector3d& scores, double c, const Eigen::Matrix3d& dW,
                                         double d_log_det, WeightModel model = WeightModel::kLdl);

/** \brief Per-frame features consumed by the estimator */
struct FeatureSet {
  std::vector<Eigen::Vector4d> keypoints;  ///< metric, homogeneous, z = 0
  std::vector<Eigen::Matrix3d> weights;
  Eigen::MatrixXd descriptors;             ///< D x L
  std::vector<int> cell_ids;
  std::vector<Eigen::Vector3d> scores_raw; ///< (d1, d2, d3)
  std::vector<double> log_det_r;           ///< ln|R| per keypoint

  std::size_t size() const { return keypoints.size(); }
  Eigen::Matrix4Xd points_matrix() const;
};

/** \brief Options governing feature construction from dense maps */
struct FeatureOptions {
  double resolution = 0.2592;
  double weight_c = 1e4;
  WeightModel weight_model = WeightModel::kLdl;
  bool normalize_descriptors = false;  ///< unit-length descriptors before matching
};

/** \brief Feature set plus the intermediate state needed to backpropagate through it */
struct FrameFeatures {
  Keypoints keypoints;
  FeatureSet set;
  std::vector<double> descriptor_norms;  ///< pre-normalisation lengths; empty when not normalised
};

FrameFeatures build_features(const DenseMaps& maps, const std::vector<bool>& valid_cells,
                             const FeatureOptions& opts, int cell_size);

/** \brief Per-keypoint adjoints on the outputs of build_features */
struct FeatureGrad {
  std::vector<Eigen::Vector4d> d_points;
  std::vector<Eigen::Vector3d> d_scores;
  Eigen::MatrixXd d_descriptors;  ///< D x L

  static FeatureGrad zeros(const FeatureSet& set);
};

/** \brief Accumulates the map adjoints of build_features into d_maps */
void build_features_backward(const DenseMaps& maps, const FrameFeatures& frame, const FeatureGrad& grad,
                             const FeatureOptions& opts, DenseMaps& d_maps);

}  // namespace hero
