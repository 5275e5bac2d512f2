/**
 * \file evaluation.cpp
 * \brief Trajectory I/O and the KITTI drift metric.
 */
#include "hero/evaluation.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

#include "hero/error.hpp"

namespace hero {

void Trajectory::validate() const {
  if (times.size() != poses.size()) throw std::invalid_argument("Trajectory: times/poses size mismatch");
  for (std::size_t k = 1; k < times.size(); ++k)
    if (!(times[k] > times[k - 1])) throw std::invalid_argument("Trajectory: timestamps must strictly increase");
}

namespace {

// Rows round-tripped through text lose orthonormality at the 1e-10 level.
Pose project_pose(const Eigen::Matrix4d& M, const std::string& where) {
  const Eigen::Matrix3d R = M.topLeftCorner<3, 3>();
  if ((R.transpose() * R - Eigen::Matrix3d::Identity()).norm() > 1e-6 || R.determinant() <= 0.0)
    throw ParseError(where + ": rotation block is not a rotation");
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
  T.topLeftCorner<3, 3>() = svd.matrixU() * svd.matrixV().transpose();
  T.topRightCorner<3, 1>() = M.topRightCorner<3, 1>();
  return Pose(T);
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  return in;
}

}  // namespace

void write_trajectory(const std::string& path, const Trajectory& traj) {
  traj.validate();
  FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot write " + path);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    std::fprintf(f, "%.9e", traj.times[k]);
    const Eigen::Matrix4d& T = traj.poses[k].matrix();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) std::fprintf(f, " %.9e", T(r, c));
    std::fprintf(f, "\n");
  }
  std::fclose(f);
}

Trajectory read_trajectory(const std::string& path) {
  std::ifstream in = open_in(path);
  Trajectory traj;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    double t;
    Eigen::Matrix4d M = Eigen::Matrix4d::Identity();
    ss >> t;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) ss >> M(r, c);
    std::string extra;
    if (ss.fail() || (ss >> extra)) throw ParseError(path + ":" + std::to_string(lineno) + ": expected 13 numbers");
    traj.times.push_back(t);
    traj.poses.push_back(project_pose(M, path + ":" + std::to_string(lineno)));
  }
  try {
    traj.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(path + ": " + e.what());
  }
  return traj;
}

void write_groundtruth_csv(const std::string& path, const GroundTruth& gt) {
  FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot write " + path);
  std::fprintf(f, "timestamp,x,y,yaw,vx,vy,vyaw\n");
  for (std::size_t k = 0; k < gt.size(); ++k) {
    const Pose P = gt.world_pose(k);
    const Eigen::Matrix3d R = P.rotation();
    const double yaw = std::atan2(R(1, 0), R(0, 0));
    const Twist& w = gt.velocities[k];
    std::fprintf(f, "%.9e,%.9e,%.9e,%.9e,%.9e,%.9e,%.9e\n", gt.times[k], P.translation().x(), P.translation().y(), yaw,
                 w(0), w(1), w(5));
  }
  std::fclose(f);
}

Trajectory read_groundtruth_csv(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("timestamp,x,y,yaw", 0) != 0)
    throw ParseError(path + ": missing groundtruth header");
  Trajectory traj;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    double v[7];
    for (double& x : v) ss >> x;
    if (ss.fail()) throw ParseError(path + ":" + std::to_string(lineno) + ": expected 7 columns");
    traj.times.push_back(v[0]);
    traj.poses.push_back(Pose::planar(v[1], v[2], v[3]));
  }
  try {
    traj.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(path + ": " + e.what());
  }
  return traj;
}

Trajectory read_any_trajectory(const std::string& path) {
  const bool csv = path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
  return csv ? read_groundtruth_csv(path) : read_trajectory(path);
}

Trajectory groundtruth_trajectory(const GroundTruth& gt) {
  Trajectory t;
  t.times = gt.times;
  for (std::size_t k = 0; k < gt.size(); ++k) t.poses.push_back(gt.world_pose(k));
  return t;
}

std::vector<double> kitti_lengths() { return {100, 200, 300, 400, 500, 600, 700, 800}; }

std::vector<double> parse_lengths(const std::string& spec) {
  double a, b, s;
  char c1, c2;
  std::istringstream ss(spec);
  if (!(ss >> a >> c1 >> b >> c2 >> s) || c1 != ':' || c2 != ':' || !(s > 0.0) || !(a > 0.0) || b < a)
    throw std::invalid_argument("lengths must be start:stop:step with 0 < start <= stop, step > 0");
  std::vector<double> out;
  for (int i = 0; a + i * s <= b + 1e-9 * b; ++i) out.push_back(a + i * s);
  return out;
}

DriftReport kitti_drift(const Trajectory& est, const Trajectory& gt, const std::vector<double>& lengths) {
  est.validate();
  gt.validate();
  if (lengths.empty()) throw std::invalid_argument("kitti_drift: no lengths");
  if (gt.size() < 2) throw TooShort("kitti_drift: groundtruth has fewer than two poses");

  std::vector<double> gaps;
  for (std::size_t k = 1; k < gt.size(); ++k) gaps.push_back(gt.times[k] - gt.times[k - 1]);
  std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
  const double tol = 0.5 * gaps[gaps.size() / 2];

  std::vector<Pose> P_est, P_gt;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const auto it = std::lower_bound(gt.times.begin(), gt.times.end(), est.times[i]);
    std::size_t best = gt.size();
    double best_d = tol;
    for (auto cand : {it, it == gt.times.begin() ? it : it - 1}) {
      if (cand == gt.times.end()) continue;
      const double d = std::abs(*cand - est.times[i]);
      if (d <= best_d) {
        best_d = d;
        best = static_cast<std::size_t>(cand - gt.times.begin());
      }
    }
    if (best == gt.size()) continue;
    P_est.push_back(est.poses[i]);
    P_gt.push_back(gt.poses[best]);
  }

  std::vector<double> dist(P_gt.size(), 0.0);
  for (std::size_t k = 1; k < P_gt.size(); ++k)
    dist[k] = dist[k - 1] + (P_gt[k].translation() - P_gt[k - 1].translation()).norm();
  const double min_len = *std::min_element(lengths.begin(), lengths.end());
  if (P_gt.empty() || dist.back() < min_len)
    throw TooShort("kitti_drift: groundtruth path is shorter than " + std::to_string(min_len) + " m");

  DriftReport rep;
  rep.scaled = lengths != kitti_lengths();
  double sum_t = 0.0, sum_r = 0.0;
  for (double L : lengths) {
    LengthError le;
    le.length = L;
    for (std::size_t i = 0; i < P_gt.size(); ++i) {
      const auto it = std::lower_bound(dist.begin() + i, dist.end(), dist[i] + L);
      if (it == dist.end()) break;
      const std::size_t j = static_cast<std::size_t>(it - dist.begin());
      const Eigen::Matrix4d d_gt = P_gt[i].inverse().matrix() * P_gt[j].matrix();
      const Eigen::Matrix4d d_est = P_est[i].inverse().matrix() * P_est[j].matrix();
      const Eigen::Matrix4d E = d_est.inverse() * d_gt;
      const double t_err = E.topRightCorner<3, 1>().norm() / L;
      const double cos_a = std::clamp(0.5 * (E.topLeftCorner<3, 3>().trace() - 1.0), -1.0, 1.0);
      const double r_err = std::acos(cos_a) * 180.0 / M_PI / L;
      le.translational += t_err;
      le.rotational += r_err;
      ++le.count;
    }
    sum_t += le.translational;
    sum_r += le.rotational;
    rep.num_segments += le.count;
    if (le.count > 0) {
      le.translational = 100.0 * le.translational / le.count;
      le.rotational /= le.count;
    }
    rep.per_length.push_back(le);
  }
  if (rep.num_segments > 0) {
    rep.translational_error = 100.0 * sum_t / rep.num_segments;
    rep.rotational_error = sum_r / rep.num_segments;
  }
  return rep;
}

std::string DriftReport::to_json() const {
  nlohmann::ordered_json j;
  j["translational_error_percent"] = translational_error;
  j["rotational_error_deg_per_m"] = rotational_error;
  j["num_segments"] = num_segments;
  j["scaled_lengths"] = scaled;
  j["per_length"] = nlohmann::ordered_json::array();
  for (const auto& le : per_length)
    j["per_length"].push_back({{"length_m", le.length},
                               {"count", le.count},
                               {"translational_error_percent", le.translational},
                               {"rotational_error_deg_per_m", le.rotational}});
  return j.dump(2);
}

void DriftReport::write_csv(const std::string& path) const {
  FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot write " + path);
  std::fprintf(f, "length_m,count,translational_percent,rotational_deg_per_m\n");
  for (const auto& le : per_length)
    std::fprintf(f, "%.6f,%d,%.9e,%.9e\n", le.length, le.count, le.translational, le.rotational);
  std::fclose(f);
}

}  // namespace hero
