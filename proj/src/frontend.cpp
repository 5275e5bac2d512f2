/**
 * \file frontend.cpp
 * \brief Window matching and the measurement loss adjoints.
 */
#include "hero/frontend.hpp"

#include <stdexcept>

namespace hero {

CartesianImage project_scan(const PolarScan& scan, const FrontendConfig& cfg) {
  return polar_to_cartesian(scan, cfg.image_size, cfg.resolution, cfg.beta);
}

std::vector<bool> valid_cells(const CartesianImage& img, int cell_size, const FrontendConfig& cfg) {
  if (!cfg.use_mask) {
    const int n = img.size() / cell_size;
    return std::vector<bool>(static_cast<std::size_t>(n * n), true);
  }
  return cell_validity(img, cell_size, cfg.min_valid_ratio);
}

WindowMatches match_window(const std::vector<const FeatureSet*>& frames, double temperature,
                           const std::vector<std::vector<bool>>* keep) {
  if (frames.size() < 2) throw std::invalid_argument("match_window: need a reference and at least one frame");
  WindowMatches wm;
  const FeatureSet& ref = *frames[0];
  if (ref.size() == 0) return wm;
  const Eigen::Matrix4Xd ref_points = ref.points_matrix();
  for (std::size_t k = 1; k < frames.size(); ++k) {
    const FeatureSet& src = *frames[k];
    for (std::size_t l = 0; l < src.size(); ++l) {
      if (keep && !(*keep)[k][l]) continue;
      Match m = match(src.descriptors.col(static_cast<Eigen::Index>(l)), ref.descriptors, ref_points, temperature);
      MeasurementFactor f;
      f.z = src.keypoints[l];
      f.r = m.point;
      f.W = src.weights[l];
      f.frame = static_cast<int>(k);
      wm.factors.push_back(f);
      wm.source.push_back(static_cast<int>(l));
      wm.matches.push_back(std::move(m));
    }
  }
  return wm;
}

MStepResult mstep_measurement(const std::vector<const FeatureSet*>& frames, const WindowMatches& wm,
                              const WindowState& mean, double alpha, double temperature, const FrontendConfig& cfg) {
  MStepResult out;
  for (const FeatureSet* f : frames) out.grads.push_back(FeatureGrad::zeros(*f));
  if (wm.factors.empty()) return out;
  const FeatureSet& ref = *frames[0];
  const Eigen::Matrix4Xd ref_points = ref.points_matrix();
  const Eigen::Matrix4d ref_inv = mean.states[0].pose.inverse().matrix();

  for (std::size_t i = 0; i < wm.factors.size(); ++i) {
    const MeasurementFactor& f = wm.factors[i];
    const int k = f.frame, l = wm.source[i];
    const Eigen::Matrix4d M = mean.states[k].pose.matrix() * ref_inv;
    const Eigen::Vector3d e = (f.z - M * f.r).head<3>();
    const Eigen::Vector3d We = f.W * e;
    const double u2 = e.dot(We);
    if (alpha > 0.0 && u2 > alpha) continue;
    ++out.inliers;
    const FeatureSet& src = *frames[k];
    const Eigen::Vector3d& scores = src.scores_raw[l];
    out.loss += 0.5 * u2 - log_det_w(scores, cfg.weight_c, cfg.weight_model);

    Eigen::Vector4d dz = Eigen::Vector4d::Zero();
    dz.head<3>() = We;
    FeatureGrad& gk = out.grads[k];
    gk.d_points[l] += dz;
    gk.d_scores[l] +=
        assemble_weight_backward(scores, cfg.weight_c, 0.5 * e * e.transpose(), -1.0, cfg.weight_model);

    const Eigen::Vector4d dr = -M.transpose() * dz;
    const MatchGrad mg = match_backward(wm.matches[i], src.descriptors.col(l), ref.descriptors, ref_points,
                                        temperature, dr);
    gk.d_descriptors.col(l) += mg.d_src;
    FeatureGrad& g0 = out.grads[0];
    g0.d_descriptors += mg.d_ref;
    for (Eigen::Index n = 0; n < mg.d_points.cols(); ++n) g0.d_points[n] += mg.d_points.col(n);
  }
  return out;
}

}  // namespace hero
