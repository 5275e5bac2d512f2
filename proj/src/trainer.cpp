/**
 * \file trainer.cpp
 * \brief GEM training step, augmentation and the training loop.
 */
#include "hero/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "hero/checkpoint.hpp"
#include "hero/error.hpp"

namespace hero {

void TrainConfig::validate() const {
  if (window_size < 2) throw ValidationError("train.window_size", "must be at least 2");
  if (!(learning_rate >= 0.0)) throw ValidationError("train.learning_rate", "must be non-negative");
  if (max_iterations < 0) throw ValidationError("train.max_iterations", "must be non-negative");
  if (!(alpha > 0.0)) throw ValidationError("train.alpha", "must be positive");
  if (!std::isfinite(eta)) throw ValidationError("train.eta", "must be finite");
  if (!(aug_max_angle >= 0.0)) throw ValidationError("train.aug_max_angle", "must be non-negative");
  if (checkpoint_every < 0) throw ValidationError("train.checkpoint_every", "must be non-negative");
}

FrontendConfig PipelineConfig::effective_frontend() const {
  FrontendConfig f = frontend;
  if (train.ablation.scalar_weight) f.weight_model = WeightModel::kScalar;
  if (train.ablation.no_masking) f.use_mask = false;
  return f;
}

void OptimizerState::apply(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr) {
  if (m.size() != params.size()) {
    m = Eigen::VectorXd::Zero(params.size());
    v = Eigen::VectorXd::Zero(params.size());
    step = 0;
  }
  ++step;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  params.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

CartesianImage rotate_image(const CartesianImage& in, double angle) {
  if (angle == 0.0) return in;
  const int S = in.size();
  CartesianImage out = in;
  out.pixels.setZero();
  out.mask.setConstant(false);
  const double c = 0.5 * S, ca = std::cos(angle), sa = std::sin(angle);
  for (int v = 0; v < S; ++v)
    for (int u = 0; u < S; ++u) {
      const double x = u - c, y = v - c;
      const double us = ca * x + sa * y + c, vs = -sa * x + ca * y + c;
      const long nu = std::lround(us), nv = std::lround(vs);
      if (nu >= 0 && nv >= 0 && nu < S && nv < S) out.mask(v, u) = in.mask(nv, nu);
      if (!(us >= 0.0 && vs >= 0.0 && us <= S - 1 && vs <= S - 1)) continue;
      const int u0 = std::min(static_cast<int>(us), S - 2), v0 = std::min(static_cast<int>(vs), S - 2);
      const double tu = us - u0, tv = vs - v0;
      out.pixels(v, u) = (1 - tv) * ((1 - tu) * in.pixels(v0, u0) + tu * in.pixels(v0, u0 + 1)) +
                         tv * ((1 - tu) * in.pixels(v0 + 1, u0) + tu * in.pixels(v0 + 1, u0 + 1));
    }
  return out;
}

double augment_rotation(const CartesianImage& in, double max_angle, std::mt19937_64& rng, CartesianImage& out) {
  if (!(max_angle >= 0.0)) throw std::invalid_argument("augment_rotation: max_angle must be non-negative");
  double angle = 0.0;
  if (max_angle > 0.0) angle = std::uniform_real_distribution<double>(-max_angle, max_angle)(rng);
  out = rotate_image(in, angle);
  return angle;
}

FeatureSet inference_filter(const FeatureSet& f, double eta) {
  FeatureSet out;
  std::vector<Eigen::Index> keep;
  for (std::size_t i = 0; i < f.size(); ++i)
    if (f.log_det_r[i] >= eta) keep.push_back(static_cast<Eigen::Index>(i));
  out.descriptors.resize(f.descriptors.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    const auto i = static_cast<std::size_t>(keep[j]);
    out.keypoints.push_back(f.keypoints[i]);
    out.weights.push_back(f.weights[i]);
    out.cell_ids.push_back(f.cell_ids[i]);
    out.scores_raw.push_back(f.scores_raw[i]);
    out.log_det_r.push_back(f.log_det_r[i]);
    out.descriptors.col(static_cast<Eigen::Index>(j)) = f.descriptors.col(keep[j]);
  }
  return out;
}

StepMetrics train_step(FeatureModel& model, const std::vector<const CartesianImage*>& window,
                       const std::vector<double>& times, const PipelineConfig& cfg, OptimizerState& opt,
                       std::mt19937_64& rng) {
  const auto t0 = std::chrono::steady_clock::now();
  const int w = static_cast<int>(window.size());
  if (w < 2 || times.size() != window.size()) throw std::invalid_argument("train_step: need >= 2 timestamped images");
  const FrontendConfig fc = cfg.effective_frontend();
  const Architecture& arch = model.architecture();
  const TrainConfig& tc = cfg.train;

  std::vector<CartesianImage> imgs(w);
  std::vector<double> angles(w, 0.0);
  const bool augment = !tc.ablation.no_augmentation && tc.aug_max_angle > 0.0;
  for (int k = 0; k < w; ++k) {
    if (augment)
      angles[k] = augment_rotation(*window[k], tc.aug_max_angle, rng, imgs[k]);
    else
      imgs[k] = *window[k];
  }

  StepMetrics met;
  const Eigen::VectorXd saved_buffers = model.buffers();
  std::vector<const Grid*> grids;
  for (const auto& im : imgs) grids.push_back(&im.pixels);
  Tape tape;
  const std::vector<DenseMaps> maps = forward(model, grids, NormMode::kTrain, &tape);

  std::vector<FrameFeatures> feats;
  std::vector<const FeatureSet*> sets;
  for (int k = 0; k < w; ++k)
    feats.push_back(build_features(maps[k], valid_cells(imgs[k], arch.cell_size, fc), fc.feature_options(),
                                   arch.cell_size));
  for (const auto& f : feats) sets.push_back(&f.set);
  const WindowMatches wm = match_window(sets, arch.temperature);
  met.factors = static_cast<int>(wm.factors.size());

  // Window-relative initial guess: identity motion, but the augmentation
  // rotations are known so the relative rotation is seeded with them.
  WindowState init;
  init.times = times;
  for (int k = 0; k < w; ++k) init.states.push_back({Pose::planar(0.0, 0.0, angles[k] - angles[0]), Twist::Zero()});

  Posterior post;
  try {
    post = solve_window(init, cfg.prior, wm.factors, cfg.solver);
  } catch (const SolverDiverged&) {
    met.skipped = true;
  } catch (const SingularSystem&) {
    met.skipped = true;
  } catch (const AngleNearPi&) {
    met.skipped = true;
  }
  if (met.skipped) {
    model.buffers() = saved_buffers;
    met.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return met;
  }

  const double alpha = tc.ablation.no_mah_gate ? 0.0 : tc.alpha;
  const MStepResult ms = mstep_measurement(sets, wm, post.mean, alpha, arch.temperature, fc);
  met.loss = ms.loss;
  met.inliers = ms.inliers;
  met.esgvi = esgvi_loss(post, cfg.prior, wm.factors);
  for (int k = 1; k < w; ++k)
    met.pose_change +=
        lie::log_map(post.mean.states[k].pose * init.states[k].pose.inverse()).norm();

  std::vector<DenseMaps> adj;
  for (int k = 0; k < w; ++k) {
    adj.push_back(DenseMaps::zeros_like(maps[k]));
    build_features_backward(maps[k], feats[k], ms.grads[k], fc.feature_options(), adj[k]);
  }
  const Eigen::VectorXd grad = backprop(model, tape, adj);
  met.grad_norm = grad.norm();
  if (tc.learning_rate > 0.0 && grad.allFinite()) opt.apply(model.params(), grad, tc.learning_rate);
  met.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return met;
}

std::vector<StepMetrics> train(FeatureModel& model, const std::vector<CartesianImage>& images,
                               const std::vector<double>& times, const PipelineConfig& cfg,
                               const TrainOutputs& outputs) {
  cfg.train.validate();
  const int w = cfg.train.window_size;
  const int n = static_cast<int>(images.size());
  if (n < w || times.size() != images.size()) throw std::invalid_argument("train: sequence shorter than the window");

  std::ofstream log;
  if (!outputs.log_csv.empty()) {
    const bool fresh = !std::filesystem::exists(outputs.log_csv) || std::filesystem::file_size(outputs.log_csv) == 0;
    log.open(outputs.log_csv, std::ios::app);
    if (!log) throw std::runtime_error("cannot open " + outputs.log_csv.string());
    if (fresh) log << "step,loss,inliers,grad_norm,wall_ms\n";
  }
  if (!outputs.checkpoint_dir.empty()) std::filesystem::create_directories(outputs.checkpoint_dir);

  std::mt19937_64 rng(cfg.train.seed);
  std::uniform_int_distribution<int> start_dist(0, n - w);
  OptimizerState opt;
  std::vector<StepMetrics> history;
  for (int s = 1; s <= cfg.train.max_iterations; ++s) {
    const int start = start_dist(rng);
    std::vector<const CartesianImage*> win;
    std::vector<double> t;
    for (int k = start; k < start + w; ++k) {
      win.push_back(&images[k]);
      t.push_back(times[k]);
    }
    StepMetrics m = train_step(model, win, t, cfg, opt, rng);
    m.step = s;
    history.push_back(m);
    if (log) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%d,%.9e,%d,%.9e,%.3f\n", s, m.skipped ? NAN : m.loss, m.inliers, m.grad_norm,
                    m.wall_ms);
      log << buf << std::flush;
    }
    if (!outputs.checkpoint_dir.empty() && cfg.train.checkpoint_every > 0 && s % cfg.train.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof name, "step_%06d.herm", s);
      save_checkpoint(outputs.checkpoint_dir / name, model);
    }
    if (outputs.on_step) outputs.on_step(m);
  }
  return history;
}

}  // namespace hero
