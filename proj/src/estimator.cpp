/**
 * \file estimator.cpp
 * \brief Sliding-window Gauss-Newton and the variational loss.
 */
#include "hero/estimator.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "hero/error.hpp"

namespace hero {

void WindowState::validate() const {
  if (states.size() < 2) throw std::invalid_argument("WindowState: need at least two frames");
  if (times.size() != states.size()) throw std::invalid_argument("WindowState: times/states size mismatch");
  for (std::size_t k = 1; k < times.size(); ++k)
    if (!(times[k] > times[k - 1])) throw std::invalid_argument("WindowState: timestamps must strictly increase");
}

Eigen::Vector3d measurement_error(const Pose& reference, const Pose& frame_pose, const MeasurementFactor& f) {
  const Eigen::Matrix4d M = frame_pose.matrix() * reference.inverse().matrix();
  return (f.z - M * f.r).head<3>();
}

double robust_weight(const Eigen::Vector3d& e, const Eigen::Matrix3d& W) {
  const double u2 = e.dot(W * e);
  const double d = 1.0 + u2;
  return 1.0 / (d * d);
}

namespace {

// Geman-McClure rho(u) = u^2 / (2 (1 + u^2)) on the squared Mahalanobis norm.
double measurement_cost(double u2, bool robust) { return robust ? 0.5 * u2 / (1.0 + u2) : 0.5 * u2; }

void check_factors(const WindowState& s, const std::vector<MeasurementFactor>& meas) {
  for (const auto& f : meas)
    if (f.frame < 1 || f.frame >= static_cast<int>(s.size()))
      throw std::invalid_argument("measurement factor frame index outside the unlocked window frames");
}

struct Block {
  int offset;
  Eigen::Matrix<double, Eigen::Dynamic, 6> J;
};

struct NormalEquations {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
};

NormalEquations build_normal_equations(const WindowState& s, const PriorConfig& prior,
                                       const std::vector<MeasurementFactor>& meas, bool robust) {
  const int w = static_cast<int>(s.size());
  const int n = num_variables(w);
  NormalEquations ne{Eigen::MatrixXd::Zero(n, n), Eigen::VectorXd::Zero(n)};

  for (int k = 1; k < w; ++k) {
    const PriorFactor f = make_prior_factor(s.states[k - 1], s.states[k], s.times[k] - s.times[k - 1], prior);
    std::vector<Block> blocks;
    if (k - 1 >= 1) blocks.push_back({state_offset(k - 1), f.jac_prev.leftCols<6>()});
    blocks.push_back({k - 1 == 0 ? 0 : state_offset(k - 1) + 6, f.jac_prev.rightCols<6>()});
    blocks.push_back({state_offset(k), f.jac_next.leftCols<6>()});
    blocks.push_back({state_offset(k) + 6, f.jac_next.rightCols<6>()});
    const Vector12d Pe = f.information * f.error;
    for (const auto& a : blocks) {
      ne.g.segment<6>(a.offset) += a.J.transpose() * Pe;
      const Eigen::Matrix<double, 6, 12> JaP = a.J.transpose() * f.information;
      for (const auto& b : blocks) ne.H.block<6, 6>(a.offset, b.offset) += JaP * b.J;
    }
  }

  const Pose& ref = s.states[0].pose;
  const Eigen::Matrix4d ref_inv = ref.inverse().matrix();
  for (const auto& f : meas) {
    const Eigen::Matrix4d M = s.states[f.frame].pose.matrix() * ref_inv;
    const Eigen::Vector4d q = M * f.r;
    const Eigen::Vector3d e = (f.z - q).head<3>();
    const Eigen::Matrix<double, 3, 6> J = -lie::odot(q).topRows<3>();
    const double wgt = robust ? robust_weight(e, f.W) : 1.0;
    const Eigen::Matrix<double, 6, 3> JtW = wgt * J.transpose() * f.W;
    const int o = state_offset(f.frame);
    ne.H.block<6, 6>(o, o) += JtW * J;
    ne.g.segment<6>(o) += JtW * e;
  }
  return ne;
}

WindowState retract(const WindowState& s, const Eigen::VectorXd& delta) {
  WindowState out = s;
  out.states[0].velocity += delta.head<6>();
  for (std::size_t k = 1; k < s.size(); ++k) {
    const int o = state_offset(static_cast<int>(k));
    out.states[k].pose = lie::exp_map(delta.segment<6>(o)) * s.states[k].pose;
    out.states[k].velocity += delta.segment<6>(o + 6);
  }
  return out;
}

}  // namespace

double window_cost(const WindowState& s, const PriorConfig& prior, const std::vector<MeasurementFactor>& meas,
                   bool robust) {
  double cost = 0.0;
  for (std::size_t k = 1; k < s.size(); ++k) {
    const Vector12d e = prior_error(s.states[k - 1], s.states[k], s.times[k] - s.times[k - 1]);
    cost += 0.5 * e.dot(prior_information(prior, s.times[k] - s.times[k - 1]) * e);
  }
  const Pose& ref = s.states[0].pose;
  for (const auto& f : meas) {
    const Eigen::Vector3d e = measurement_error(ref, s.states[f.frame].pose, f);
    cost += measurement_cost(e.dot(f.W * e), robust);
  }
  return cost;
}

Posterior solve_window(const WindowState& initial, const PriorConfig& prior,
                       const std::vector<MeasurementFactor>& meas, const SolverOptions& opts) {
  initial.validate();
  prior.validate();
  check_factors(initial, meas);

  auto safe_cost = [&](const WindowState& s) {
    try {
      return window_cost(s, prior, meas, opts.robust);
    } catch (const AngleNearPi&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  Posterior post;
  WindowState state = initial;
  double cost = safe_cost(state);
  if (!std::isfinite(cost)) throw SolverDiverged("solve_window: non-finite initial cost");

  int failures = 0;
  double damping = 0.0;
  for (int it = 1; it <= opts.max_iterations; ++it) {
    post.iterations = it;
    NormalEquations ne = build_normal_equations(state, prior, meas, opts.robust);
    if (damping > 0.0) ne.H.diagonal() += damping * ne.H.diagonal();
    Eigen::LLT<Eigen::MatrixXd> llt(ne.H);
    Eigen::VectorXd delta;
    if (llt.info() != Eigen::Success) {
      if (ne.g.lpNorm<Eigen::Infinity>() > 1e-12)
        throw SingularSystem("solve_window: normal equations are not positive definite");
      delta = Eigen::VectorXd::Zero(ne.g.size());
    } else {
      delta = -llt.solve(ne.g);
    }
    if (!delta.allFinite()) throw SolverDiverged("solve_window: non-finite update");
    if (delta.norm() < opts.tolerance) {
      post.converged = true;
      break;
    }

    bool accepted = false;
    double step = 1.0;
    for (int h = 0; h <= opts.max_halvings; ++h, step *= 0.5) {
      WindowState cand = retract(state, step * delta);
      const double c = safe_cost(cand);
      if (c <= cost) {
        state = std::move(cand);
        cost = c;
        accepted = true;
        break;
      }
    }
    if (accepted) {
      failures = 0;
      damping = 0.0;
      if (step * delta.norm() < opts.tolerance) {
        post.converged = true;
        break;
      }
    } else {
      if (++failures >= opts.max_increases)
        throw SolverDiverged("solve_window: cost failed to decrease for " + std::to_string(failures) +
                             " consecutive iterations");
      damping = damping > 0.0 ? damping * 10.0 : 1e-4;
    }
  }

  post.mean = state;
  post.cost = cost;
  const NormalEquations ne = build_normal_equations(state, prior, meas, opts.robust);
  post.information = ne.H;
  Eigen::LLT<Eigen::MatrixXd> llt(ne.H);
  if (llt.info() == Eigen::Success) {
    const Eigen::MatrixXd L = llt.matrixL();
    post.log_det_information = 2.0 * L.diagonal().array().log().sum();
    const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(ne.H.rows(), ne.H.cols()));
    post.marginal_covariances.push_back(cov.topLeftCorner<6, 6>());
    for (std::size_t k = 1; k < state.size(); ++k) {
      const int o = state_offset(static_cast<int>(k));
      post.marginal_covariances.push_back(cov.block(o, o, 12, 12));
    }
  } else {
    post.log_det_information = -std::numeric_limits<double>::infinity();
  }
  return post;
}

EsgviLoss esgvi_loss(const Posterior& posterior, const PriorConfig& prior, const std::vector<MeasurementFactor>& meas) {
  const WindowState& s = posterior.mean;
  EsgviLoss loss;
  for (std::size_t k = 1; k < s.size(); ++k) {
    const double dt = s.times[k] - s.times[k - 1];
    const Vector12d e = prior_error(s.states[k - 1], s.states[k], dt);
    loss.prior += 0.5 * e.dot(prior_information(prior, dt) * e);
  }
  const Pose& ref = s.states[0].pose;
  for (const auto& f : meas) {
    const Eigen::Vector3d e = measurement_error(ref, s.states[f.frame].pose, f);
    loss.measurement += 0.5 * e.dot(f.W * e) - std::log(f.W.determinant());
  }
  loss.log_det = 0.5 * posterior.log_det_information;
  return loss;
}

}  // namespace hero
