#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "clothspread/behavior_tree.hpp"
#include "clothspread/cloth_sim.hpp"
#include "clothspread/deformation_control.hpp"
#include "clothspread/kinematics.hpp"

namespace clothspread::bt {

// Tunables shared by the concrete cloth-spreading actions. Everything here
// comes from the scenario file.
struct WorldParams {
  // grasp attempt and the move-and-check probe
  double grasp_tolerance = 0.01;        // m
  double grasp_clearance = 0.006;       // m the gripper aims above the surface
  double approach_speed = 0.08;         // m/s
  double approach_tolerance = 0.002;    // m
  double check_window = 1.0;            // s of observed horizontal probe
  double check_speed = 0.02;            // m/s
  double check_threshold = 0.005;       // m of closest-feature displacement
  double vertical_offset_bound = 0.01;  // m, uniform redraw after a miss
  int retry_count = 5;
  double flatten_tolerance = 0.035;  // m per feature

  // injected grasp-height bias: the first N attempts aim this far off
  double grasp_height_error = 0.0;
  int grasp_height_error_attempts = 0;

  // base motion
  double base_speed = 0.3;      // m/s
  double safe_distance = 0.25;  // m
  double corner_margin = 0.05;  // m extra when routing around corners

  // deformation controller
  double gain = 3.5;   // K = gain * I
  double alpha = 0.1;  // Broyden update rate
  double min_dx_norm = 1e-5;
  double convergence_threshold = 0.032;  // m
  double convergence_hold = 1.0;         // s
  double max_duration = 120.0;           // s per grasp
  double ee_speed_cap = 0.05;            // m/s
  bool hold_complement = false;  // true: uncontrolled features are held at
                                 // their measured position at grasp time

  // initialization
  double home_joint_speed = 1.0;  // rad/s
  double home_tolerance = 1e-3;   // rad

  std::uint64_t seed = 0;
};

// Observation hooks the harness uses to build logs and metrics. All
// callbacks are optional no-ops by default.
class RunRecorder {
 public:
  virtual ~RunRecorder() = default;
  virtual void on_world_tick(std::uint64_t /*tick*/, double /*sim_time*/,
                             const kin::KinematicsState& /*robot*/,
                             const ctrl::FeatureVector& /*true_features*/) {}
  virtual void on_controller_tick(int /*grasp_serial*/,
                                  const ctrl::TickRecord& /*record*/,
                                  const Eigen::VectorXd& /*target*/) {}
  virtual void on_standing_position(int /*serial*/, const kin::Waypoint&) {}
  virtual void on_grasp_attempt(int /*standing_serial*/) {}
  virtual void on_deformation_result(int /*grasp_serial*/, int /*feature*/,
                                     ctrl::DeformationResult /*result*/,
                                     double /*final_error*/,
                                     double /*start_time*/, double /*end_time*/,
                                     long /*ticks*/) {}
};

struct WorldInit {
  sim::ClothConfig cloth;
  sim::ClothState initial_cloth;  // recipe applied and settled
  std::vector<sim::FeatureAttachment> attachments;
  sim::SensorModel sensor;
  kin::ArmModel arm;
  Eigen::VectorXd home_joints;
  kin::BasePose base_start;
  Eigen::VectorXd targets;  // s_dsr, stacked dims * k in feature-id order
  std::vector<std::pair<int, int>> feature_pairs;  // same-edge partners
  WorldParams params;
};

// Owns the simulated cloth and robot and advances them one control period
// at a time. Every mutating call below moves sim time by exactly one
// period; measurements are free and tied to the current tick.
class World {
 public:
  explicit World(WorldInit init);

  std::uint64_t tick() const { return tick_; }
  double control_period() const { return model_.config().control_period(); }
  double time() const { return static_cast<double>(tick_) * control_period(); }

  ctrl::FeatureVector measure_now() const;
  ctrl::FeatureVector true_now() const;

  Eigen::Vector3d ee_position() const;
  const kin::KinematicsState& robot() const { return robot_; }
  const kin::ArmModel& arm() const { return init_.arm; }
  const Eigen::VectorXd& home_joints() const { return init_.home_joints; }
  const sim::ClothModel& cloth_model() const { return model_; }
  const sim::ClothState& cloth() const { return cloth_; }
  const WorldParams& params() const { return init_.params; }
  const Eigen::VectorXd& targets() const { return init_.targets; }
  int feature_count() const { return static_cast<int>(init_.attachments.size()); }
  int feature_dims() const { return init_.attachments.front().dims; }
  Eigen::VectorXd target_of(int feature_id) const;
  int partner_of(int feature_id) const;

  bool grasp_held() const { return cloth_.grasp.has_value(); }
  bool attach_grasp_at_ee();
  void release_grasp();

  // One control period of arm motion under a task-space velocity command
  // (base frozen); the cloth substeps along the interpolated ee path.
  void command_arm(const Eigen::Vector3d& ee_velocity);

  // One control period of rate-limited joint motion toward a target.
  void command_joints_toward(const Eigen::VectorXd& target_joints);

  // One control period of base waypoint tracking; true when the plan is
  // exhausted.
  bool walk_step(kin::BasePlan& plan);

  // Serials for metrics: standing positions and grasp sessions.
  int begin_standing_position(const kin::Waypoint& pose);
  int standing_serial() const { return standing_serial_; }
  int begin_grasp_session();

  void record_grasp_attempt();
  int total_grasp_attempts() const { return attempt_serial_; }
  double grasp_height_error_now() const;
  double draw_retry_offset();

  kin::StandingQuery make_standing_query() const;

  RunRecorder* recorder = nullptr;

 private:
  void advance_period(const Eigen::Vector3d& ee_from,
                      const Eigen::Vector3d& ee_to);

  WorldInit init_;
  sim::ClothModel model_;
  sim::ClothState cloth_;
  kin::KinematicsState robot_;
  std::uint64_t tick_ = 0;
  int standing_serial_ = -1;
  int grasp_serial_ = -1;
  int attempt_serial_ = 0;
  int retry_draws_ = 0;
};

// Blackboard keys shared between the harness and the actions.
namespace keys {
inline constexpr const char* world = "world";
inline constexpr const char* flattened = "flattened";
inline constexpr const char* init_done = "init.done";
inline constexpr const char* walk_state = "walk.state";
inline constexpr const char* grasp_state = "grasp.state";
inline constexpr const char* deform_state = "deform.state";
}  // namespace keys

NodePtr make_initialize_action();
NodePtr make_walk_action();
NodePtr make_grasp_check_action();
NodePtr make_deformation_action();
NodePtr make_flattened_condition();

// Root -> Sequence[ InitializeWholeRobotSystem,
//                   loop-until-IsClothFlattened(
//                     Sequence[ WalkToFeaturePoint,
//                               Retry(n)[ MoveEndEffectorAndCheckIfClothMoveTogether ],
//                               DeformationControl ]) ]
Tree build_spreading_tree(int retry_count);

}  // namespace clothspread::bt
