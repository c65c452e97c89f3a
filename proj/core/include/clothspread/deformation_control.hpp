#pragma once

#include <Eigen/Core>
#include <vector>

namespace clothspread::ctrl {

// Model-free task-space controller: a user-defined task y = r(s) over the
// measured feature vector, an online Broyden estimate of the deformation
// Jacobian (the map from end-effector velocity to task velocity), and a
// pseudoinverse velocity law u = J^+ K (y* - y).

struct FeatureVector {
  Eigen::VectorXd values;  // length dims * feature_count, meters
  int dims = 2;
  int feature_count = 0;
  double timestamp = 0.0;  // s

  int size() const { return static_cast<int>(values.size()); }
};

// y = r(s) implemented as coordinate selection: y_i = s[selector[i]].
// Kept as a separate type so nonlinear tasks can slot in later.
struct TaskFunction {
  std::vector<int> selector;
  Eigen::VectorXd target;  // y*, same length as selector

  int dof() const { return static_cast<int>(selector.size()); }

  // Throws std::invalid_argument on out-of-range or duplicate indices.
  void validate(int s_length) const;

  Eigen::VectorXd evaluate(const Eigen::VectorXd& s) const;
};

Eigen::VectorXd evaluate_task(const FeatureVector& s, const TaskFunction& task);

// Euclidean norm of (target - y).
double task_error(const Eigen::VectorXd& y, const Eigen::VectorXd& target);

struct JacobianEstimate {
  Eigen::MatrixXd jacobian;   // m x p
  double alpha = 0.1;         // update rate, in (0, 1]
  double min_dx_norm = 1e-5;  // m; updates below this are skipped
  long step_index = 0;

  int task_dof() const { return static_cast<int>(jacobian.rows()); }
  int input_dof() const { return static_cast<int>(jacobian.cols()); }

  // m x p matrix with ones on the main diagonal; the rectangular
  // extension of the identity initialization.
  static JacobianEstimate rectangular_identity(int m, int p, double alpha,
                                               double min_dx_norm = 1e-5);

  // Identity between each feature and the end-effector: one dims x p
  // block per feature with ones on its diagonal. For planar features this
  // starts the controller out commanding in-plane motion only.
  static JacobianEstimate feature_block_identity(int feature_count, int dims,
                                                 int p, double alpha,
                                                 double min_dx_norm = 1e-5);
};

enum class UpdateStatus { accepted, skipped_small_step, rejected_nonfinite };

// Rank-1 secant correction:
//   J <- J + alpha * (dy - J dx) dx^T / (dx^T dx),
// applied only when |dx| >= min_dx_norm and all inputs are finite.
UpdateStatus broyden_update(JacobianEstimate& est, const Eigen::VectorXd& dy,
                            const Eigen::VectorXd& dx);

struct ControllerConfig {
  Eigen::MatrixXd gain;                // K, m x m symmetric positive definite
  double convergence_threshold = 0.032;  // m
  double convergence_hold = 1.0;         // s
  double max_duration = 120.0;           // s
  double ee_speed_cap = 0.05;            // m/s

  // Throws std::invalid_argument if K is not symmetric positive definite.
  void validate() const;
};

struct ControlCommand {
  Eigen::VectorXd velocity;  // u, m/s, |u| <= ee_speed_cap
  bool degraded = false;     // damping kicked in on a poorly conditioned estimate
};

// u = J^+ K (y* - y); left pseudoinverse for m > p, right for m < p,
// inverse for m = p, with singular-value damping near rank deficiency.
ControlCommand control_step(const JacobianEstimate& est,
                            const Eigen::VectorXd& y,
                            const ControllerConfig& cfg,
                            const Eigen::VectorXd& target);

// What the control loop needs from the world: measurements, the actual
// end-effector position, and a way to apply one control period of motion.
class ControlPlant {
 public:
  virtual ~ControlPlant() = default;
  virtual FeatureVector measure() = 0;
  virtual Eigen::VectorXd ee_position() const = 0;
  virtual void apply_command(const Eigen::VectorXd& u) = 0;
  virtual bool grasp_held() const { return true; }
  virtual double time() const = 0;
  virtual double control_period() const = 0;
};

enum class DeformationResult { converged, timeout, grasp_lost };

struct TickRecord {
  long step_index = 0;
  double sim_time = 0.0;
  Eigen::VectorXd s;
  Eigen::VectorXd y;
  Eigen::VectorXd u;
  double task_error = 0.0;
  double dx_norm = 0.0;
  bool update_accepted = false;
};

struct DeformationLog {
  DeformationResult result = DeformationResult::timeout;
  std::vector<TickRecord> ticks;
  double final_error = 0.0;
};

// Tick-wise version of the control loop so a behavior-tree action can
// advance it one control period at a time.
class DeformationSession {
 public:
  DeformationSession(ControlPlant& plant, TaskFunction task,
                     ControllerConfig cfg, JacobianEstimate est);

  enum class Status { running, converged, timeout, grasp_lost };

  // Measure, update the estimate, command, advance one period.
  Status step();

  Status status() const { return status_; }
  const std::vector<TickRecord>& ticks() const { return ticks_; }
  const TaskFunction& task() const { return task_; }
  const JacobianEstimate& estimate() const { return est_; }
  double final_error() const;

 private:
  ControlPlant& plant_;
  TaskFunction task_;
  ControllerConfig cfg_;
  JacobianEstimate est_;
  Status status_ = Status::running;
  std::vector<TickRecord> ticks_;
  bool have_prev_ = false;
  Eigen::VectorXd prev_y_;
  Eigen::VectorXd prev_x_;
  double start_time_ = 0.0;
  double hold_elapsed_ = 0.0;
  long tick_index_ = 0;
};

// Runs the loop to completion: measure -> Broyden update -> pseudoinverse
// command -> advance, until the task error stays below the threshold for
// the hold window, the duration budget runs out, or the grasp is lost.
DeformationLog run_deformation_control(ControlPlant& plant,
                                       const TaskFunction& task,
                                       const ControllerConfig& cfg,
                                       JacobianEstimate est);

}  // namespace clothspread::ctrl
