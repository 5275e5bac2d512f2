/**
 * \file simworld.cpp
 * \brief Trajectory sampling, scan rendering and oracle correspondences.
 */
#include "hero/simworld.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace hero {

World World::random(std::uint64_t seed, int count, const Eigen::Vector2d& center, const Eigen::Vector2d& extent) {
  if (count < 4) throw std::invalid_argument("World: need at least 4 landmarks");
  if (!(extent.minCoeff() > 0.0)) throw std::invalid_argument("World: extent must be positive");
  World w;
  w.center = center;
  w.extent = extent;
  w.seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> px(-extent.x(), extent.x()), py(-extent.y(), extent.y()), refl(0.5, 1.0);
  for (int i = 0; i < count; ++i) {
    Landmark l;
    const double x = px(rng), y = py(rng);
    l.position = center + Eigen::Vector2d(x, y);
    l.reflectivity = refl(rng);
    w.landmarks.push_back(l);
  }
  return w;
}

bool World::contains(const Eigen::Vector2d& p) const {
  return ((p - center).array().abs() <= extent.array()).all();
}

GroundTruth generate_trajectory(std::uint64_t seed, int n_frames, double dt, const PriorConfig& qc,
                                const Twist& initial_velocity) {
  if (n_frames < 2) throw std::invalid_argument("generate_trajectory: need at least 2 frames");
  if (!(dt > 0.0)) throw std::invalid_argument("generate_trajectory: dt must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  GroundTruth gt;
  Twist w = initial_velocity;
  w(2) = w(3) = w(4) = 0.0;
  Pose T;
  for (int k = 0; k < n_frames; ++k) {
    gt.times.push_back(k * dt);
    gt.poses.push_back(T);
    gt.velocities.push_back(w);
    Twist d_xi = Twist::Zero(), d_w = Twist::Zero();
    for (int i : {0, 1, 5}) {
      // Cholesky of q * [dt^3/3, dt^2/2; dt^2/2, dt]
      const double q = qc.qc_diag(i);
      const double l11 = std::sqrt(q * dt * dt * dt / 3.0);
      const double l21 = q * dt * dt / 2.0 / l11;
      const double l22 = std::sqrt(std::max(q * dt - l21 * l21, 0.0));
      const double n1 = normal(rng), n2 = normal(rng);
      d_xi(i) = l11 * n1;
      d_w(i) = l21 * n1 + l22 * n2;
    }
    T = lie::exp_map(dt * w + d_xi) * T;
    w += d_w;
  }
  return gt;
}

PolarScan render_scan(const World& world, const Pose& pose, const SensorParams& sensor, double timestamp,
                      std::uint64_t noise_seed) {
  PolarScan scan;
  const int A = sensor.azimuths, B = sensor.bins;
  scan.azimuths.resize(A);
  const double step = 2.0 * M_PI / A;
  for (int a = 0; a < A; ++a) scan.azimuths[a] = a * step;
  scan.intensities = Grid::Zero(A, B);
  scan.timestamp = timestamp;
  scan.range_resolution = sensor.range_resolution;

  const double s_r = sensor.sigma_range_bins, s_a = sensor.sigma_azimuth_steps;
  const int reach_r = static_cast<int>(std::ceil(4.0 * s_r)), reach_a = static_cast<int>(std::ceil(4.0 * s_a));
  for (const auto& l : world.landmarks) {
    const Eigen::Vector4d p = lie::transform_point(pose, Eigen::Vector4d(l.position.x(), l.position.y(), 0.0, 1.0));
    const double rho = std::hypot(p.x(), p.y());
    if (rho > sensor.max_range()) continue;
    double phi = std::atan2(p.y(), p.x());
    if (phi < 0.0) phi += 2.0 * M_PI;
    const double fb = rho / sensor.range_resolution, fa = phi / step;
    const int cb = static_cast<int>(std::lround(fb)), ca = static_cast<int>(std::lround(fa));
    for (int da = -reach_a; da <= reach_a; ++da) {
      const int a = ((ca + da) % A + A) % A;
      const double ga = (ca + da - fa) / s_a;
      for (int b = std::max(0, cb - reach_r); b <= std::min(B - 1, cb + reach_r); ++b) {
        const double gr = (b - fb) / s_r;
        scan.intensities(a, b) += sensor.peak * l.reflectivity * std::exp(-0.5 * (ga * ga + gr * gr));
      }
    }
  }
  if (sensor.speckle > 0.0) {
    std::mt19937_64 rng(noise_seed);
    std::uniform_real_distribution<double> u(0.0, sensor.speckle * sensor.peak);
    for (int a = 0; a < A; ++a)
      for (int b = 0; b < B; ++b) scan.intensities(a, b) += u(rng);
  }
  return scan;
}

std::vector<PolarScan> render_sequence(const World& world, const GroundTruth& gt, const SensorParams& sensor,
                                       std::uint64_t noise_seed) {
  std::vector<PolarScan> scans;
  scans.reserve(gt.size());
  for (std::size_t k = 0; k < gt.size(); ++k)
    scans.push_back(render_scan(world, gt.poses[k], sensor, gt.times[k], noise_seed + 7919 * k));
  return scans;
}

std::vector<OracleCorrespondence> oracle_correspondences(const World& world, const Pose& pose_a, const Pose& pose_b,
                                                         double noise_std, double max_range, std::uint64_t seed,
                                                         double c) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Matrix3d W = Eigen::Matrix3d::Identity();
  if (noise_std > 0.0) W.topLeftCorner<2, 2>() /= 2.0 * noise_std * noise_std;
  W(2, 2) = c;
  std::vector<OracleCorrespondence> out;
  for (std::size_t i = 0; i < world.landmarks.size(); ++i) {
    const auto& l = world.landmarks[i];
    const Eigen::Vector4d pw(l.position.x(), l.position.y(), 0.0, 1.0);
    Eigen::Vector4d pa = lie::transform_point(pose_a, pw), pb = lie::transform_point(pose_b, pw);
    if (pa.head<2>().norm() > max_range || pb.head<2>().norm() > max_range) continue;
    if (noise_std > 0.0) {
      pa.x() += noise_std * normal(rng);
      pa.y() += noise_std * normal(rng);
      pb.x() += noise_std * normal(rng);
      pb.y() += noise_std * normal(rng);
    }
    out.push_back({pb, pa, W, static_cast<int>(i)});
  }
  return out;
}

SimSequence simulate(const SimConfig& cfg) {
  SimSequence seq;
  PriorConfig qc;
  qc.qc_diag = cfg.trajectory_qc;
  Twist w0 = Twist::Zero();
  // Moving forward at speed v shifts world points by -v in the sensor frame.
  w0(0) = -cfg.speed;
  w0(5) = -cfg.yaw_rate;
  seq.groundtruth = generate_trajectory(cfg.trajectory_seed, cfg.frames, cfg.dt, qc, w0);
  Eigen::Vector2d lo = Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  for (std::size_t k = 0; k < seq.groundtruth.size(); ++k) {
    const Eigen::Vector2d p = seq.groundtruth.world_pose(k).translation().head<2>();
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Eigen::Vector2d half = 0.5 * (hi - lo) + Eigen::Vector2d::Constant(cfg.margin);
  seq.world = World::random(cfg.world_seed, cfg.landmarks, 0.5 * (hi + lo), half.cwiseMax(1e-3));
  seq.scans = render_sequence(seq.world, seq.groundtruth, cfg.sensor, cfg.noise_seed);
  return seq;
}

}  // namespace hero
