/**
 * \file evaluation.hpp
 * \brief Trajectory files and KITTI-style sub-sequence drift.
 */
#pragma once

#include <string>
#include <vector>

#include "hero/lie.hpp"
#include "hero/simworld.hpp"

namespace hero {

/** \brief Timestamped world-frame sensor poses T_{0,k} */
struct Trajectory {
  std::vector<double> times;
  std::vector<Pose> poses;

  std::size_t size() const { return poses.size(); }
  void validate() const;
};

/** \brief One row per frame: timestamp then the top 3x4 block row-major, %.9e, space separated */
void write_trajectory(const std::string& path, const Trajectory& traj);
Trajectory read_trajectory(const std::string& path);

/** \brief groundtruth.csv with header timestamp,x,y,yaw,vx,vy,vyaw (x, y, yaw of T_{0,k}; v of the prior's velocity) */
void write_groundtruth_csv(const std::string& path, const GroundTruth& gt);
Trajectory read_groundtruth_csv(const std::string& path);

/** \brief Reads either format, chosen by a .csv extension */
Trajectory read_any_trajectory(const std::string& path);

Trajectory groundtruth_trajectory(const GroundTruth& gt);

struct LengthError {
  double length = 0.0;
  int count = 0;
  double translational = 0.0;  ///< percent
  double rotational = 0.0;     ///< deg / m
};

struct DriftReport {
  double translational_error = 0.0;  ///< percent, mean over all (start, length) pairs
  double rotational_error = 0.0;     ///< deg / m
  int num_segments = 0;
  std::vector<LengthError> per_length;
  bool scaled = false;  ///< lengths differ from 100..800 m

  std::string to_json() const;
  void write_csv(const std::string& path) const;
};

std::vector<double> kitti_lengths();
/** \brief "a:b:s" -> {a, a+s, ..., b} */
std::vector<double> parse_lengths(const std::string& spec);

/**
 * \brief Mean relative translation and rotation error over every sub-sequence.
 *
 * Estimated rows are associated with the nearest groundtruth timestamp within
 * half the median groundtruth spacing; unmatched rows are dropped. Each start
 * index pairs with the first later frame whose accumulated groundtruth path
 * length reaches L. Throws TooShort when the path is shorter than the
 * smallest length.
 */
DriftReport kitti_drift(const Trajectory& est, const Trajectory& gt,
                        const std::vector<double>& lengths = kitti_lengths());

}  // namespace hero
