/**
 * \file odometry.cpp
 * \brief Sliding-window odometry driver.
 */
#include <map>
#include <stdexcept>

#include "hero/error.hpp"
#include "hero/trainer.hpp"

namespace hero {

OdometryResult run_sliding_window(const std::vector<double>& times, int window_size, const PriorConfig& prior,
                                  const SolverOptions& solver, const FactorProvider& factors) {
  const int n = static_cast<int>(times.size());
  if (window_size < 2) throw std::invalid_argument("run_sliding_window: window size must be at least 2");
  if (n < window_size) throw std::invalid_argument("run_sliding_window: fewer frames than the window size");

  std::vector<StateVar> est(n);
  std::vector<bool> flagged(n, false);
  std::vector<int> win{0};
  for (int j = 1; j < n; ++j) {
    const StateVar& last = est[j - 1];
    est[j].pose = lie::exp_map((times[j] - times[j - 1]) * last.velocity) * last.pose;
    est[j].velocity = last.velocity;
    win.push_back(j);
    if (static_cast<int>(win.size()) > window_size) win.erase(win.begin());

    WindowState ws;
    for (int i : win) {
      ws.times.push_back(times[i]);
      ws.states.push_back(est[i]);
    }
    try {
      const Posterior post = solve_window(ws, prior, factors(win), solver);
      for (std::size_t i = 1; i < win.size(); ++i) est[win[i]] = post.mean.states[i];
      est[win[0]].velocity = post.mean.states[0].velocity;
    } catch (const Error&) {
      flagged[j] = true;
    }
  }

  OdometryResult out;
  out.trajectory.times = times;
  for (const auto& s : est) {
    out.trajectory.poses.push_back(s.pose.inverse());
    out.velocities.push_back(s.velocity);
  }
  out.dead_reckoned = flagged;
  return out;
}

OdometryResult run_odometry(const FeatureModel& model, const std::vector<CartesianImage>& images,
                            const std::vector<double>& times, const PipelineConfig& cfg) {
  if (images.size() != times.size()) throw std::invalid_argument("run_odometry: images/times size mismatch");
  const FrontendConfig fc = cfg.effective_frontend();
  const Architecture& arch = model.architecture();
  std::map<int, FeatureSet> cache;

  auto provider = [&](const std::vector<int>& frames) {
    while (!cache.empty() && cache.begin()->first < frames.front()) cache.erase(cache.begin());
    std::vector<const FeatureSet*> sets;
    for (int i : frames) {
      auto it = cache.find(i);
      if (it == cache.end()) {
        const DenseMaps maps = forward_inference(model, images[i].pixels);
        it = cache.emplace(i, build_features(maps, valid_cells(images[i], arch.cell_size, fc), fc.feature_options(),
                                             arch.cell_size)
                                  .set)
                 .first;
      }
      sets.push_back(&it->second);
    }
    if (!cfg.train.eta_filter) return match_window(sets, arch.temperature).factors;
    std::vector<std::vector<bool>> keep;
    for (const FeatureSet* s : sets) {
      std::vector<bool> kf;
      for (double ld : s->log_det_r) kf.push_back(ld >= cfg.train.eta);
      keep.push_back(std::move(kf));
    }
    return match_window(sets, arch.temperature, &keep).factors;
  };
  return run_sliding_window(times, cfg.train.window_size, cfg.prior, cfg.solver, provider);
}

}  // namespace hero
