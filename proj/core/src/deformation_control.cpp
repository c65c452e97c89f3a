#include "clothspread/deformation_control.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

namespace clothspread::ctrl {

namespace {

constexpr double kDampingLambda = 0.01;
constexpr double kSingularThreshold = 1e-4;

}  // namespace

void TaskFunction::validate(int s_length) const {
  if (selector.empty()) {
    throw std::invalid_argument("task.selector: must be non-empty");
  }
  if (static_cast<int>(selector.size()) != target.size()) {
    throw std::invalid_argument("task.target: length must match selector");
  }
  std::unordered_set<int> seen;
  for (int idx : selector) {
    if (idx < 0 || idx >= s_length) {
      throw std::invalid_argument("task.selector: index " + std::to_string(idx) +
                                  " out of range for feature vector of length " +
                                  std::to_string(s_length));
    }
    if (!seen.insert(idx).second) {
      throw std::invalid_argument("task.selector: duplicate index " +
                                  std::to_string(idx));
    }
  }
}

Eigen::VectorXd TaskFunction::evaluate(const Eigen::VectorXd& s) const {
  Eigen::VectorXd y(selector.size());
  for (std::size_t i = 0; i < selector.size(); ++i) {
    const int idx = selector[i];
    if (idx < 0 || idx >= s.size()) {
      throw std::invalid_argument("task.selector: index " + std::to_string(idx) +
                                  " out of range");
    }
    y[static_cast<int>(i)] = s[idx];
  }
  return y;
}

Eigen::VectorXd evaluate_task(const FeatureVector& s, const TaskFunction& task) {
  return task.evaluate(s.values);
}

double task_error(const Eigen::VectorXd& y, const Eigen::VectorXd& target) {
  if (y.size() != target.size()) {
    throw std::invalid_argument("task_error: dimension mismatch");
  }
  return (target - y).norm();
}

JacobianEstimate JacobianEstimate::rectangular_identity(int m, int p,
                                                        double alpha,
                                                        double min_dx_norm) {
  if (m <= 0 || p <= 0) {
    throw std::invalid_argument("JacobianEstimate: dimensions must be positive");
  }
  if (alpha <= 0.0 || alpha > 1.0) {
    throw std::invalid_argument("JacobianEstimate: alpha must be in (0, 1]");
  }
  JacobianEstimate est;
  est.jacobian = Eigen::MatrixXd::Identity(m, p);
  est.alpha = alpha;
  est.min_dx_norm = min_dx_norm;
  return est;
}

JacobianEstimate JacobianEstimate::feature_block_identity(int feature_count,
                                                          int dims, int p,
                                                          double alpha,
                                                          double min_dx_norm) {
  if (feature_count <= 0 || dims <= 0) {
    throw std::invalid_argument("JacobianEstimate: dimensions must be positive");
  }
  JacobianEstimate est = rectangular_identity(feature_count * dims, p, alpha,
                                              min_dx_norm);
  est.jacobian.setZero();
  for (int f = 0; f < feature_count; ++f) {
    for (int a = 0; a < std::min(dims, p); ++a) {
      est.jacobian(f * dims + a, a) = 1.0;
    }
  }
  return est;
}

UpdateStatus broyden_update(JacobianEstimate& est, const Eigen::VectorXd& dy,
                            const Eigen::VectorXd& dx) {
  if (dy.size() != est.task_dof() || dx.size() != est.input_dof()) {
    throw std::invalid_argument("broyden_update: increment dimension mismatch");
  }
  if (!dy.allFinite() || !dx.allFinite()) {
    return UpdateStatus::rejected_nonfinite;
  }
  const double dx2 = dx.squaredNorm();
  if (std::sqrt(dx2) < est.min_dx_norm) {
    return UpdateStatus::skipped_small_step;
  }
  est.jacobian += est.alpha * (dy - est.jacobian * dx) * dx.transpose() / dx2;
  ++est.step_index;
  return UpdateStatus::accepted;
}

void ControllerConfig::validate() const {
  if (gain.rows() != gain.cols() || gain.rows() == 0) {
    throw std::invalid_argument("controller.gain: K must be square");
  }
  if (!gain.isApprox(gain.transpose(), 1e-9)) {
    throw std::invalid_argument("controller.gain: K must be symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(gain);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("controller.gain: K must be positive definite");
  }
  if (convergence_threshold <= 0.0) {
    throw std::invalid_argument("controller.convergence_threshold: must be > 0");
  }
  if (convergence_hold < 0.0) {
    throw std::invalid_argument("controller.convergence_hold: must be >= 0");
  }
  if (max_duration <= 0.0) {
    throw std::invalid_argument("controller.max_duration: must be > 0");
  }
  if (ee_speed_cap <= 0.0) {
    throw std::invalid_argument("controller.ee_speed_cap: must be > 0");
  }
}

ControlCommand control_step(const JacobianEstimate& est,
                            const Eigen::VectorXd& y,
                            const ControllerConfig& cfg,
                            const Eigen::VectorXd& target) {
  const int m = est.task_dof();
  if (y.size() != m || target.size() != m) {
    throw std::invalid_argument("control_step: task dimension mismatch");
  }
  if (cfg.gain.rows() != m) {
    throw std::invalid_argument("control_step: gain dimension mismatch");
  }

  const Eigen::VectorXd w = cfg.gain * (target - y);

  // Pseudoinverse through the SVD. For m > p this is the left inverse
  // (least squares), for m < p the right inverse (minimum norm), and the
  // plain inverse when square. Singular values below the threshold are
  // damped instead of inverted so the command stays finite.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(
      est.jacobian, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  Eigen::VectorXd inv_sv(sv.size());
  bool degraded = false;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv[i] < kSingularThreshold) {
      inv_sv[i] = sv[i] / (sv[i] * sv[i] + kDampingLambda * kDampingLambda);
      degraded = true;
    } else {
      inv_sv[i] = 1.0 / sv[i];
    }
  }

  ControlCommand out;
  out.velocity =
      svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose() * w;
  out.degraded = degraded;

  const double norm = out.velocity.norm();
  if (norm > cfg.ee_speed_cap) {
    out.velocity *= cfg.ee_speed_cap / norm;
  }
  return out;
}

DeformationSession::DeformationSession(ControlPlant& plant, TaskFunction task,
                                       ControllerConfig cfg,
                                       JacobianEstimate est)
    : plant_(plant),
      task_(std::move(task)),
      cfg_(std::move(cfg)),
      est_(std::move(est)),
      start_time_(plant.time()) {
  cfg_.validate();
  if (cfg_.gain.rows() != est_.task_dof()) {
    throw std::invalid_argument(
        "DeformationSession: gain and estimate dimensions disagree");
  }
  if (task_.dof() != est_.task_dof()) {
    throw std::invalid_argument(
        "DeformationSession: task and estimate dimensions disagree");
  }
}

DeformationSession::Status DeformationSession::step() {
  if (status_ != Status::running) {
    return status_;
  }
  if (!plant_.grasp_held()) {
    status_ = Status::grasp_lost;
    return status_;
  }

  const FeatureVector s = plant_.measure();
  const Eigen::VectorXd x = plant_.ee_position();
  const Eigen::VectorXd y = task_.evaluate(s.values);
  const double err = task_error(y, task_.target);

  TickRecord rec;
  rec.step_index = tick_index_;
  rec.sim_time = plant_.time();
  rec.s = s.values;
  rec.y = y;
  rec.task_error = err;

  if (have_prev_) {
    const Eigen::VectorXd dx = x - prev_x_;
    const Eigen::VectorXd dy = y - prev_y_;
    rec.dx_norm = dx.norm();
    rec.update_accepted =
        broyden_update(est_, dy, dx) == UpdateStatus::accepted;
  }
  prev_x_ = x;
  prev_y_ = y;
  have_prev_ = true;

  Eigen::VectorXd u = Eigen::VectorXd::Zero(est_.input_dof());
  if (err < cfg_.convergence_threshold) {
    hold_elapsed_ += plant_.control_period();
    if (hold_elapsed_ >= cfg_.convergence_hold) {
      rec.u = u;
      ticks_.push_back(std::move(rec));
      status_ = Status::converged;
      return status_;
    }
  } else {
    hold_elapsed_ = 0.0;
    u = control_step(est_, y, cfg_, task_.target).velocity;
  }
  rec.u = u;
  ticks_.push_back(std::move(rec));
  ++tick_index_;

  if (plant_.time() - start_time_ >= cfg_.max_duration) {
    status_ = Status::timeout;
    return status_;
  }

  plant_.apply_command(u);
  return status_;
}

double DeformationSession::final_error() const {
  return ticks_.empty() ? std::numeric_limits<double>::quiet_NaN()
                        : ticks_.back().task_error;
}

DeformationLog run_deformation_control(ControlPlant& plant,
                                       const TaskFunction& task,
                                       const ControllerConfig& cfg,
                                       JacobianEstimate est) {
  DeformationSession session(plant, task, cfg, std::move(est));
  while (session.step() == DeformationSession::Status::running) {
  }

  DeformationLog log;
  switch (session.status()) {
    case DeformationSession::Status::converged:
      log.result = DeformationResult::converged;
      break;
    case DeformationSession::Status::grasp_lost:
      log.result = DeformationResult::grasp_lost;
      break;
    default:
      log.result = DeformationResult::timeout;
      break;
  }
  log.ticks = session.ticks();
  log.final_error = session.final_error();
  return log;
}

}  // namespace clothspread::ctrl
