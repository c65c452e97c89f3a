#pragma once

#include <Eigen/Core>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "clothspread/geometry.hpp"

namespace clothspread::kin {

// Floating-base serial manipulator: q = [base xyz, base rpy, arm joints].
// The base is kinematic (a planar platform that tracks waypoints); the arm
// is a revolute chain driven by damped-least-squares velocity IK.

struct BasePose {
  double x = 0.0, y = 0.0, z = 0.0;    // m
  double rx = 0.0, ry = 0.0, rz = 0.0;  // rad, extrinsic x-y-z (R = Rz Ry Rx)

  Eigen::Vector3d translation() const { return {x, y, z}; }
  Eigen::Matrix3d rotation() const;
};

struct KinematicsState {
  BasePose base;
  Eigen::VectorXd arm_joints;

  int dof() const { return 6 + static_cast<int>(arm_joints.size()); }
};

struct ArmJoint {
  Eigen::Vector3d axis;    // unit, in the parent frame
  Eigen::Vector3d offset;  // link translation applied before the joint
  double limit_lo = -3.0;  // rad
  double limit_hi = 3.0;
};

struct ArmModel {
  std::vector<ArmJoint> joints;
  Eigen::Vector3d ee_offset = Eigen::Vector3d::Zero();
  double ee_velocity_limit = 0.1;  // m/s

  int dof() const { return static_cast<int>(joints.size()); }

  // Maximum extension from the shoulder (joint 2 origin) to the ee.
  double reach() const;

  void validate() const;

  // Six revolute joints, alternating z/y axes, links summing to a roughly
  // 0.6 m reach; a stand-in for a small desktop-class arm.
  static ArmModel default_six_dof();
};

struct EePose {
  Eigen::Vector3d position;
  Eigen::Matrix3d orientation;
};

EePose forward_kinematics(const KinematicsState& state, const ArmModel& arm);

// Position rows of df/dq. With frozen_base only the arm columns (3 x N);
// otherwise all 6 + N columns, base translation first.
Eigen::MatrixXd manipulator_jacobian(const KinematicsState& state,
                                     const ArmModel& arm, bool frozen_base);

struct IkResult {
  Eigen::VectorXd joint_velocities;
  bool singular = false;  // damping was active near a rank drop
};

// Damped least squares: qdot = J^T (J J^T + lambda^2 I)^-1 u. The command
// is clamped to ee_velocity_limit. Always returns finite values.
IkResult ik_velocity(const KinematicsState& state, const ArmModel& arm,
                     Eigen::Vector3d ee_velocity_cmd, bool frozen_base);

// Integrates arm joints one step and clamps them to their limits.
void integrate_joints(KinematicsState& state, const ArmModel& arm,
                      const Eigen::VectorXd& joint_velocities, double dt);

struct Waypoint {
  double x = 0.0, y = 0.0, yaw = 0.0;
};

struct BasePlan {
  std::vector<Waypoint> waypoints;
  double speed = 0.3;          // m/s
  double safe_distance = 0.25;  // m, clearance kept from the table footprint
};

// Moves the base toward the current waypoint at plan speed, yaw aligned
// with travel; pops waypoints within one step of arrival. Returns true
// once the plan is exhausted.
bool advance_base(KinematicsState& state, BasePlan& plan, double dt);

class UnreachableGraspError : public std::runtime_error {
 public:
  UnreachableGraspError(const Eigen::Vector2d& grasp, const std::string& what)
      : std::runtime_error(what), grasp_(grasp) {}
  const Eigen::Vector2d& grasp_point() const { return grasp_; }

 private:
  Eigen::Vector2d grasp_;
};

struct StandingQuery {
  Rect table_extent;
  double safe_distance = 0.25;
  double arm_reach = 0.6;
  double shoulder_height = 0.55;   // world z of the arm shoulder
  double shoulder_forward = 0.10;  // shoulder offset toward the grasp, m
  double grasp_height = 0.28;      // world z of the grasp point
};

// Base pose outside the inflated footprint, facing the grasp point, from
// which the grasp is within 0.9 * arm_reach. Throws UnreachableGraspError
// when no table side admits one.
Waypoint standing_position_for(const Eigen::Vector2d& grasp_xy,
                               const StandingQuery& query);

// Waypoints from `from` to `goal` that keep safe_distance clearance from
// the table footprint, routing around its corners when the straight
// segment would cut through. corner_margin is added on top of
// safe_distance when placing corner waypoints.
std::vector<Waypoint> plan_route(const Eigen::Vector2d& from,
                                 const Waypoint& goal, const Rect& table,
                                 double safe_distance,
                                 double corner_margin = 0.05);

}  // namespace clothspread::kin
