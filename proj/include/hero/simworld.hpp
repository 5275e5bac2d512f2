/**
 * \file simworld.hpp
 * \brief Synthetic planar radar world used for groundtruth-backed evaluation.
 */
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "hero/lie.hpp"
#include "hero/prior.hpp"
#include "hero/scan.hpp"

namespace hero {

struct Landmark {
  Eigen::Vector2d position;
  double reflectivity = 1.0;
};

/** \brief Point reflectors scattered in an axis-aligned box */
struct World {
  std::vector<Landmark> landmarks;
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  Eigen::Vector2d extent = Eigen::Vector2d::Constant(100.0);  ///< half side lengths, m
  std::uint64_t seed = 0;

  /** \brief count >= 4 landmarks uniform in the box, reflectivity uniform in [0.5, 1] */
  static World random(std::uint64_t seed, int count, const Eigen::Vector2d& center, const Eigen::Vector2d& extent);
  bool contains(const Eigen::Vector2d& p) const;
};

/** \brief Per-frame groundtruth; poses are T_{k,0} (world frame 0 into sensor frame k) */
struct GroundTruth {
  std::vector<double> times;
  std::vector<Pose> poses;
  std::vector<Twist> velocities;

  std::size_t size() const { return poses.size(); }
  /** \brief Sensor pose in the world, T_{0,k} */
  Pose world_pose(std::size_t k) const { return poses[k].inverse(); }
};

/**
 * \brief Samples the white-noise-on-acceleration model restricted to the plane.
 *
 * Body velocity is a random walk with increments from the velocity block of
 * Q_k; pose increments are exp(dt * w_k + d_xi) with (d_xi, d_w) ~ N(0, Q_k).
 * Only the planar components (x, y, yaw) receive noise.
 */
GroundTruth generate_trajectory(std::uint64_t seed, int n_frames, double dt, const PriorConfig& qc,
                                const Twist& initial_velocity = Twist::Zero());

struct SensorParams {
  int azimuths = 128;
  int bins = 256;
  double range_resolution = 0.25;
  double sigma_range_bins = 1.5;
  double sigma_azimuth_steps = 1.0;
  double speckle = 0.05;  ///< uniform noise on [0, speckle * peak]
  double peak = 1.0;

  double max_range() const { return (bins - 1) * range_resolution; }
};

/** \brief Gaussian blobs at each in-range landmark's (azimuth, range) plus speckle */
PolarScan render_scan(const World& world, const Pose& pose, const SensorParams& sensor, double timestamp,
                      std::uint64_t noise_seed);

std::vector<PolarScan> render_sequence(const World& world, const GroundTruth& gt, const SensorParams& sensor,
                                       std::uint64_t noise_seed);

struct OracleCorrespondence {
  Eigen::Vector4d z;  ///< landmark in frame b
  Eigen::Vector4d r;  ///< landmark in frame a
  Eigen::Matrix3d W;
  int landmark = 0;
};

/**
 * \brief Landmarks within max_range of both poses, expressed in each sensor
 *        frame with independent Gaussian noise. W = blkdiag(I / (2 sigma^2), c),
 *        or blkdiag(I, c) when noise_std is zero.
 */
std::vector<OracleCorrespondence> oracle_correspondences(const World& world, const Pose& pose_a, const Pose& pose_b,
                                                         double noise_std, double max_range, std::uint64_t seed,
                                                         double c = 1e4);

/** \brief Simulator sequence parameters */
struct SimConfig {
  std::uint64_t world_seed = 1;
  std::uint64_t trajectory_seed = 2;
  std::uint64_t noise_seed = 3;
  int landmarks = 50;
  double margin = 30.0;  ///< landmark box = path bounding box grown by this much, m
  int frames = 300;
  double dt = 0.25;
  double speed = 4.0;     ///< initial forward speed, m/s
  double yaw_rate = 0.0;  ///< initial yaw rate, rad/s
  Twist trajectory_qc = (Twist() << 0.05, 0.05, 0.05, 0.002, 0.002, 0.002).finished();
  SensorParams sensor;
};

struct SimSequence {
  World world;
  GroundTruth groundtruth;
  std::vector<PolarScan> scans;
};

/** \brief Trajectory first, then landmarks in its grown bounding box, then scans */
SimSequence simulate(const SimConfig& cfg);

}  // namespace hero
