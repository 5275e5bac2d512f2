/**
 * \file keypoints.cpp
 * \brief Spatial softmax keypoints, bilinear sampling, soft matching and LDL weights.
 */
#include "hero/keypoints.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hero/error.hpp"

namespace hero {

Keypoints extract_keypoints(const Tensor& detector, const std::vector<bool>& valid_cells, int cell_size) {
  const int S = detector.height;
  if (detector.width != S || cell_size <= 0 || S % cell_size != 0)
    throw std::invalid_argument("extract_keypoints: map must be square and divisible into cells");
  const int n = S / cell_size;
  if (static_cast<int>(valid_cells.size()) != n * n)
    throw std::invalid_argument("extract_keypoints: valid_cells size mismatch");

  Keypoints kps;
  kps.cell_size = cell_size;
  kps.cells_per_side = n;
  const int area = cell_size * cell_size;
  for (int cy = 0; cy < n; ++cy)
    for (int cx = 0; cx < n; ++cx) {
      const int id = cy * n + cx;
      if (!valid_cells[id]) continue;
      Eigen::VectorXd s(area);
      for (int y = 0; y < cell_size; ++y)
        for (int x = 0; x < cell_size; ++x)
          s(y * cell_size + x) = detector.at(0, cy * cell_size + y, cx * cell_size + x);
      s.array() -= s.maxCoeff();
      s = s.array().exp();
      s /= s.sum();
      Eigen::Vector2d uv = Eigen::Vector2d::Zero();
      for (int y = 0; y < cell_size; ++y)
        for (int x = 0; x < cell_size; ++x) {
          const double p = s(y * cell_size + x);
          uv(0) += p * (cx * cell_size + x);
          uv(1) += p * (cy * cell_size + y);
        }
      kps.coords.push_back(uv);
      kps.cell_ids.push_back(id);
      kps.softmax.push_back(std::move(s));
    }
  return kps;
}

void extract_keypoints_backward(const Keypoints& kps, const std::vector<Eigen::Vector2d>& d_coords,
                                Tensor& d_detector) {
  const int cs = kps.cell_size;
  for (std::size_t k = 0; k < kps.size(); ++k) {
    const Eigen::Vector2d& g = d_coords[k];
    if (g.isZero(0.0)) continue;
    const int cy = kps.cell_ids[k] / kps.cells_per_side, cx = kps.cell_ids[k] % kps.cells_per_side;
    const Eigen::Vector2d& uv = kps.coords[k];
    for (int y = 0; y < cs; ++y)
      for (int x = 0; x < cs; ++x) {
        const double p = kps.softmax[k](y * cs + x);
        const double u = cx * cs + x, v = cy * cs + y;
        d_detector.at(0, cy * cs + y, cx * cs + x) += p * ((u - uv(0)) * g(0) + (v - uv(1)) * g(1));
      }
  }
}

namespace {

struct Taps {
  int u0, v0;
  double tu, tv;
};

Taps bilinear_taps(const Tensor& map, const Eigen::Vector2d& uv) {
  const double u = uv(0), v = uv(1);
  if (!(u >= 0.0 && v >= 0.0 && u <= map.width - 1 && v <= map.height - 1))
    throw OutOfBounds("sample_at: coordinates outside the map");
  const int u0 = std::min(static_cast<int>(u), map.width - 2);
  const int v0 = std::min(static_cast<int>(v), map.height - 2);
  return {u0, v0, u - u0, v - v0};
}

}  // namespace

Eigen::VectorXd sample_at(const Tensor& map, const Eigen::Vector2d& uv) {
  const Taps t = bilinear_taps(map, uv);
  const int W = map.width;
  const int i00 = t.v0 * W + t.u0, i01 = i00 + 1, i10 = i00 + W, i11 = i10 + 1;
  return (1.0 - t.tv) * ((1.0 - t.tu) * map.data.col(i00) + t.tu * map.data.col(i01)) +
         t.tv * ((1.0 - t.tu) * map.data.col(i10) + t.tu * map.data.col(i11));
}

Eigen::Vector2d sample_at_backward(const Tensor& map, const Eigen::Vector2d& uv, const Eigen::VectorXd& d_value,
                                   Tensor& d_map) {
  const Taps t = bilinear_taps(map, uv);
  const int W = map.width;
  const int i00 = t.v0 * W + t.u0, i01 = i00 + 1, i10 = i00 + W, i11 = i10 + 1;
  d_map.data.col(i00) += (1.0 - t.tv) * (1.0 - t.tu) * d_value;
  d_map.data.col(i01) += (1.0 - t.tv) * t.tu * d_value;
  d_map.data.col(i10) += t.tv * (1.0 - t.tu) * d_value;
  d_map.data.col(i11) += t.tv * t.tu * d_value;
  const Eigen::VectorXd du = (1.0 - t.tv) * (map.data.col(i01) - map.data.col(i00)) +
                             t.tv * (map.data.col(i11) - map.data.col(i10));
  const Eigen::VectorXd dv = (1.0 - t.tu) * (map.data.col(i10) - map.data.col(i00)) +
                             t.tu * (map.data.col(i11) - map.data.col(i01));
  return {du.dot(d_value), dv.dot(d_value)};
}

Eigen::Vector4d to_metric(const Eigen::Vector2d& uv, double resolution, int size) {
  const double half = 0.5 * size;
  return {(uv(0) - half) * resolution, (uv(1) - half) * resolution, 0.0, 1.0};
}

Match match(const Eigen::VectorXd& src_descriptor, const Eigen::MatrixXd& ref_descriptors,
            const Eigen::Matrix4Xd& ref_points, double temperature) {
  if (ref_descriptors.cols() < 1 || ref_descriptors.cols() != ref_points.cols())
    throw std::invalid_argument("match: need at least one reference point with a descriptor");
  if (ref_descriptors.rows() != src_descriptor.size())
    throw std::invalid_argument("match: descriptor dimensions differ");
  Match m;
  m.response = ref_descriptors.transpose() * src_descriptor;
  Eigen::VectorXd logits = temperature * m.response;
  logits.array() -= logits.maxCoeff();
  m.weights = logits.array().exp();
  m.weights /= m.weights.sum();
  m.point = ref_points * m.weights;
  m.point(3) = 1.0;
  return m;
}

MatchGrad match_backward(const Match& m, const Eigen::VectorXd& src_descriptor,
                         const Eigen::MatrixXd& ref_descriptors, const Eigen::Matrix4Xd& ref_points,
                         double temperature, const Eigen::Vector4d& d_point) {
  Eigen::Vector4d g = d_point;
  g(3) = 0.0;  // the homogeneous element is pinned to 1
  MatchGrad out;
  out.d_points = g * m.weights.transpose();
  const Eigen::VectorXd d_weights = ref_points.transpose() * g;
  const Eigen::VectorXd d_logits =
      (m.weights.array() * (d_weights.array() - m.weights.dot(d_weights))).matrix();
  const Eigen::VectorXd d_response = temperature * d_logits;
  out.d_src = ref_descriptors * d_response;
  out.d_ref = src_descriptor * d_response.transpose();
  return out;
}

Eigen::Matrix3d assemble_weight(const Eigen::Vector3d& d, double c, WeightModel model) {
  Eigen::Matrix3d W = Eigen::Matrix3d::Zero();
  if (model == WeightModel::kScalar) {
    const double s = std::exp(d(0));
    W(0, 0) = s;
    W(1, 1) = s;
    W(2, 2) = s * c;
    return W;
  }
  const double e1 = std::exp(d(0)), e2 = std::exp(d(1)), l = d(2);
  W(0, 0) = e1;
  W(0, 1) = W(1, 0) = e1 * l;
  W(1, 1) = e1 * l * l + e2;
  W(2, 2) = c;
  return W;
}

double log_det_r(const Eigen::Vector3d& d, WeightModel model) {
  return model == WeightModel::kScalar ? 2.0 * d(0) : d(0) + d(1);
}

double log_det_w(const Eigen::Vector3d& d, double c, WeightModel model) {
  return model == WeightModel::kScalar ? 3.0 * d(0) + std::log(c) : d(0) + d(1) + std::log(c);
}

Eigen::Vector3d assemble_weight_backward(const Eigen::Vector3d& d, double c, const Eigen::Matrix3d& dW,
                                         double d_log_det, WeightModel model) {
  Eigen::Vector3d g = Eigen::Vector3d::Zero();
  if (model == WeightModel::kScalar) {
    const double s = std::exp(d(0));
    g(0) = s * (dW(0, 0) + dW(1, 1) + c * dW(2, 2)) + 3.0 * d_log_det;
    return g;
  }
  const double e1 = std::exp(d(0)), e2 = std::exp(d(1)), l = d(2);
  const double off = dW(0, 1) + dW(1, 0);
  g(0) = e1 * (dW(0, 0) + l * off + l * l * dW(1, 1)) + d_log_det;
  g(1) = e2 * dW(1, 1) + d_log_det;
  g(2) = e1 * (off + 2.0 * l * dW(1, 1));
  return g;
}

Eigen::Matrix4Xd FeatureSet::points_matrix() const {
  Eigen::Matrix4Xd P(4, static_cast<Eigen::Index>(keypoints.size()));
  for (std::size_t i = 0; i < keypoints.size(); ++i) P.col(static_cast<Eigen::Index>(i)) = keypoints[i];
  return P;
}

FrameFeatures build_features(const DenseMaps& maps, const std::vector<bool>& valid_cells,
                             const FeatureOptions& opts, int cell_size) {
  FrameFeatures f;
  f.keypoints = extract_keypoints(maps.detector, valid_cells, cell_size);
  const std::size_t L = f.keypoints.size();
  FeatureSet& s = f.set;
  s.descriptors.resize(maps.descriptor.channels(), static_cast<Eigen::Index>(L));
  s.cell_ids = f.keypoints.cell_ids;
  for (std::size_t k = 0; k < L; ++k) {
    const Eigen::Vector2d& uv = f.keypoints.coords[k];
    const Eigen::Vector3d scores = sample_at(maps.weight, uv);
    s.keypoints.push_back(to_metric(uv, opts.resolution, maps.size));
    s.scores_raw.push_back(scores);
    s.weights.push_back(assemble_weight(scores, opts.weight_c, opts.weight_model));
    s.log_det_r.push_back(log_det_r(scores, opts.weight_model));
    s.descriptors.col(static_cast<Eigen::Index>(k)) = sample_at(maps.descriptor, uv);
    if (opts.normalize_descriptors) {
      const double n = std::max(s.descriptors.col(static_cast<Eigen::Index>(k)).norm(), 1e-12);
      s.descriptors.col(static_cast<Eigen::Index>(k)) /= n;
      f.descriptor_norms.push_back(n);
    }
  }
  return f;
}

FeatureGrad FeatureGrad::zeros(const FeatureSet& set) {
  FeatureGrad g;
  g.d_points.assign(set.size(), Eigen::Vector4d::Zero());
  g.d_scores.assign(set.size(), Eigen::Vector3d::Zero());
  g.d_descriptors = Eigen::MatrixXd::Zero(set.descriptors.rows(), set.descriptors.cols());
  return g;
}

void build_features_backward(const DenseMaps& maps, const FrameFeatures& frame, const FeatureGrad& grad,
                             const FeatureOptions& opts, DenseMaps& d_maps) {
  const std::size_t L = frame.set.size();
  std::vector<Eigen::Vector2d> d_coords(L, Eigen::Vector2d::Zero());
  for (std::size_t k = 0; k < L; ++k) {
    const Eigen::Vector2d& uv = frame.keypoints.coords[k];
    Eigen::Vector2d g = opts.resolution * grad.d_points[k].head<2>();
    if (!grad.d_scores[k].isZero(0.0)) g += sample_at_backward(maps.weight, uv, grad.d_scores[k], d_maps.weight);
    Eigen::VectorXd dd = grad.d_descriptors.col(static_cast<Eigen::Index>(k));
    if (opts.normalize_descriptors) {
      const auto d = frame.set.descriptors.col(static_cast<Eigen::Index>(k));
      dd = (dd - d * d.dot(dd)) / frame.descriptor_norms[k];
    }
    if (!dd.isZero(0.0)) g += sample_at_backward(maps.descriptor, uv, dd, d_maps.descriptor);
    d_coords[k] = g;
  }
  extract_keypoints_backward(frame.keypoints, d_coords, d_maps.detector);
}

}  // namespace hero
