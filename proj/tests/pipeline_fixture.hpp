// Two-frame toy problem for full-pipeline gradient checks.
#pragma once

#include <algorithm>
#include <random>

#include "hero/frontend.hpp"
#include "hero/network.hpp"
#include "hero/simworld.hpp"

namespace hero::test {

struct ToyProblem {
  std::vector<CartesianImage> images;
  WindowState mean;
  FrontendConfig frontend;
  double alpha = 0.0;  ///< gate disabled so the loss is smooth in theta
};

inline Architecture toy_architecture() {
  Architecture a;
  a.encoder_channels = {4, 4};  // D = 8
  a.cell_size = 16;
  return a;
}

/** \brief 64x64 images of a small simulated world from two nearby poses */
inline ToyProblem make_toy_problem(std::uint64_t seed) {
  ToyProblem p;
  p.frontend.image_size = 64;
  p.frontend.resolution = 0.5;
  p.frontend.use_mask = false;
  SensorParams sensor;
  sensor.azimuths = 128;
  sensor.bins = 64;
  sensor.range_resolution = 0.25;
  World w = World::random(seed, 30, Eigen::Vector2d::Zero(), Eigen::Vector2d(15.0, 15.0));
  const Pose a = Pose(), b = Pose::planar(0.6, -0.3, 0.05);
  p.images.push_back(project_scan(render_scan(w, a, sensor, 0.0, seed + 1), p.frontend));
  p.images.push_back(project_scan(render_scan(w, b, sensor, 0.1, seed + 2), p.frontend));
  p.mean.times = {0.0, 0.1};
  p.mean.states = {{a, Twist::Zero()}, {b, Twist::Zero()}};
  return p;
}

/** \brief Measurement loss of the toy problem; fills dLoss/dtheta when grad is non-null */
inline double toy_loss(FeatureModel& model, const ToyProblem& p, Eigen::VectorXd* grad) {
  const Architecture& arch = model.architecture();
  std::vector<const Grid*> grids;
  for (const auto& im : p.images) grids.push_back(&im.pixels);
  Tape tape;
  const auto maps = forward(model, grids, NormMode::kTrain, grad ? &tape : nullptr);
  std::vector<FrameFeatures> feats;
  std::vector<const FeatureSet*> sets;
  for (std::size_t k = 0; k < maps.size(); ++k)
    feats.push_back(build_features(maps[k], valid_cells(p.images[k], arch.cell_size, p.frontend),
                                   p.frontend.feature_options(), arch.cell_size));
  for (const auto& f : feats) sets.push_back(&f.set);
  const WindowMatches wm = match_window(sets, arch.temperature);
  const MStepResult ms = mstep_measurement(sets, wm, p.mean, p.alpha, arch.temperature, p.frontend);
  if (grad) {
    std::vector<DenseMaps> adj;
    for (std::size_t k = 0; k < maps.size(); ++k) {
      adj.push_back(DenseMaps::zeros_like(maps[k]));
      build_features_backward(maps[k], feats[k], ms.grads[k], p.frontend.feature_options(), adj[k]);
    }
    *grad = backprop(model, tape, adj);
  }
  return ms.loss;
}

/** \brief |a - f| / max(|a|, |f|, floor) */
inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheck {
  double max_rel = 0.0;
  int probes = 0;
};

/** \brief Central differences on randomly chosen parameters */
inline GradCheck check_toy_gradient(FeatureModel& model, const ToyProblem& p, int probes, std::uint64_t seed,
                                    double step = 1e-6, double floor = 1e-6) {
  Eigen::VectorXd g;
  toy_loss(model, p, &g);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, model.params().size() - 1);
  GradCheck r;
  for (int i = 0; i < probes; ++i) {
    const Eigen::Index j = pick(rng);
    const double x0 = model.params()(j);
    model.params()(j) = x0 + step;
    const double lp = toy_loss(model, p, nullptr);
    model.params()(j) = x0 - step;
    const double lm = toy_loss(model, p, nullptr);
    model.params()(j) = x0;
    r.max_rel = std::max(r.max_rel, relative_error(g(j), (lp - lm) / (2.0 * step), floor));
    ++r.probes;
  }
  return r;
}

}  // namespace hero::test
