#include "clothspread/kinematics.hpp"

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <limits>

namespace clothspread::kin {

namespace {

Eigen::Matrix3d rot_x(double a) {
  Eigen::Matrix3d m;
  m << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  return m;
}

Eigen::Matrix3d rot_y(double a) {
  Eigen::Matrix3d m;
  m << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
  return m;
}

Eigen::Matrix3d rot_z(double a) {
  Eigen::Matrix3d m;
  m << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return m;
}

Eigen::Matrix3d drot_x(double a) {
  Eigen::Matrix3d m;
  m << 0, 0, 0, 0, -std::sin(a), -std::cos(a), 0, std::cos(a), -std::sin(a);
  return m;
}

Eigen::Matrix3d drot_y(double a) {
  Eigen::Matrix3d m;
  m << -std::sin(a), 0, std::cos(a), 0, 0, 0, -std::cos(a), 0, -std::sin(a);
  return m;
}

Eigen::Matrix3d drot_z(double a) {
  Eigen::Matrix3d m;
  m << -std::sin(a), -std::cos(a), 0, std::cos(a), -std::sin(a), 0, 0, 0, 0;
  return m;
}

constexpr double kDlsLambda = 0.01;
constexpr double kSingularThreshold = 1e-4;

}  // namespace

Eigen::Matrix3d BasePose::rotation() const {
  return rot_z(rz) * rot_y(ry) * rot_x(rx);
}

double ArmModel::reach() const {
  double total = ee_offset.norm();
  for (std::size_t i = 2; i < joints.size(); ++i) {
    total += joints[i].offset.norm();
  }
  return total;
}

void ArmModel::validate() const {
  if (joints.empty()) {
    throw std::invalid_argument("arm.joints: chain must be non-empty");
  }
  for (std::size_t i = 0; i < joints.size(); ++i) {
    const std::string tag = "arm.joints[" + std::to_string(i) + "]";
    if (std::abs(joints[i].axis.norm() - 1.0) > 1e-9) {
      throw std::invalid_argument(tag + ".axis: must be a unit vector");
    }
    if (joints[i].limit_lo >= joints[i].limit_hi) {
      throw std::invalid_argument(tag + ".limits: lo must be < hi");
    }
  }
  if (reach() <= 0.0) {
    throw std::invalid_argument("arm: link lengths must give positive reach");
  }
}

ArmModel ArmModel::default_six_dof() {
  ArmModel arm;
  const Eigen::Vector3d z{0, 0, 1};
  const Eigen::Vector3d y{0, 1, 0};
  arm.joints = {
      {z, {0.10, 0.00, 0.20}, -M_PI, M_PI},  // column above the mount
      {y, {0.00, 0.00, 0.05}, -2.2, 2.2},
      {y, {0.20, 0.00, 0.00}, -2.6, 2.6},
      {z, {0.16, 0.00, 0.00}, -M_PI, M_PI},
      {y, {0.12, 0.00, 0.00}, -2.2, 2.2},
      {z, {0.06, 0.00, 0.00}, -M_PI, M_PI},
  };
  arm.ee_offset = {0.06, 0.00, -0.04};
  arm.ee_velocity_limit = 0.1;
  return arm;
}

EePose forward_kinematics(const KinematicsState& state, const ArmModel& arm) {
  if (state.arm_joints.size() != arm.dof()) {
    throw std::invalid_argument("forward_kinematics: joint count mismatch");
  }
  Eigen::Vector3d p = state.base.translation();
  Eigen::Matrix3d R = state.base.rotation();
  for (int i = 0; i < arm.dof(); ++i) {
    p += R * arm.joints[i].offset;
    R = R * Eigen::AngleAxisd(state.arm_joints[i], arm.joints[i].axis)
                .toRotationMatrix();
  }
  p += R * arm.ee_offset;
  return {p, R};
}

Eigen::MatrixXd manipulator_jacobian(const KinematicsState& state,
                                     const ArmModel& arm, bool frozen_base) {
  const int n = arm.dof();
  if (state.arm_joints.size() != n) {
    throw std::invalid_argument("manipulator_jacobian: joint count mismatch");
  }

  // Forward pass, keeping each joint's world origin and axis.
  Eigen::Vector3d p = state.base.translation();
  Eigen::Matrix3d R = state.base.rotation();
  std::vector<Eigen::Vector3d> origins(n), axes(n);
  for (int i = 0; i < n; ++i) {
    p += R * arm.joints[i].offset;
    origins[i] = p;
    axes[i] = R * arm.joints[i].axis;
    R = R * Eigen::AngleAxisd(state.arm_joints[i], arm.joints[i].axis)
                .toRotationMatrix();
  }
  const Eigen::Vector3d ee = p + R * arm.ee_offset;

  Eigen::MatrixXd arm_cols(3, n);
  for (int i = 0; i < n; ++i) {
    arm_cols.col(i) = axes[i].cross(ee - origins[i]);
  }
  if (frozen_base) {
    return arm_cols;
  }

  Eigen::MatrixXd J(3, 6 + n);
  J.block<3, 3>(0, 0) = Eigen::Matrix3d::Identity();

  // Base orientation columns: ee = p_base + R(rx,ry,rz) * b, so each column
  // is dR/dangle * b with b the ee offset in the base frame.
  const Eigen::Matrix3d Rb = state.base.rotation();
  const Eigen::Vector3d b = Rb.transpose() * (ee - state.base.translation());
  J.col(3) = rot_z(state.base.rz) * rot_y(state.base.ry) * drot_x(state.base.rx) * b;
  J.col(4) = rot_z(state.base.rz) * drot_y(state.base.ry) * rot_x(state.base.rx) * b;
  J.col(5) = drot_z(state.base.rz) * rot_y(state.base.ry) * rot_x(state.base.rx) * b;
  J.rightCols(n) = arm_cols;
  return J;
}

IkResult ik_velocity(const KinematicsState& state, const ArmModel& arm,
                     Eigen::Vector3d ee_velocity_cmd, bool frozen_base) {
  const double cmd_norm = ee_velocity_cmd.norm();
  if (cmd_norm > arm.ee_velocity_limit && cmd_norm > 0.0) {
    ee_velocity_cmd *= arm.ee_velocity_limit / cmd_norm;
  }

  const Eigen::MatrixXd J = manipulator_jacobian(state, arm, frozen_base);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const bool singular = svd.singularValues().minCoeff() < kSingularThreshold;

  const Eigen::Matrix3d JJt =
      J * J.transpose() + kDlsLambda * kDlsLambda * Eigen::Matrix3d::Identity();
  IkResult out;
  out.joint_velocities = J.transpose() * JJt.ldlt().solve(ee_velocity_cmd);
  out.singular = singular;
  return out;
}

void integrate_joints(KinematicsState& state, const ArmModel& arm,
                      const Eigen::VectorXd& joint_velocities, double dt) {
  if (joint_velocities.size() != arm.dof()) {
    throw std::invalid_argument("integrate_joints: expected arm-only velocities");
  }
  state.arm_joints += joint_velocities * dt;
  for (int i = 0; i < arm.dof(); ++i) {
    state.arm_joints[i] = std::clamp(state.arm_joints[i], arm.joints[i].limit_lo,
                                     arm.joints[i].limit_hi);
  }
}

bool advance_base(KinematicsState& state, BasePlan& plan, double dt) {
  const double step = plan.speed * dt;
  const double tol = std::max(step, 1e-3);

  while (!plan.waypoints.empty()) {
    const Waypoint& wp = plan.waypoints.front();
    const Eigen::Vector2d to(wp.x - state.base.x, wp.y - state.base.y);
    if (to.norm() <= tol) {
      state.base.x = wp.x;
      state.base.y = wp.y;
      if (plan.waypoints.size() == 1) {
        state.base.rz = wp.yaw;  // adopt the goal heading on final arrival
      }
      plan.waypoints.erase(plan.waypoints.begin());
      continue;
    }
    const Eigen::Vector2d dir = to.normalized();
    state.base.x += dir.x() * step;
    state.base.y += dir.y() * step;
    state.base.rz = std::atan2(dir.y(), dir.x());
    return false;
  }
  return true;
}

Waypoint standing_position_for(const Eigen::Vector2d& grasp_xy,
                               const StandingQuery& q) {
  const Rect& t = q.table_extent;
  if (!t.contains(grasp_xy)) {
    throw UnreachableGraspError(
        grasp_xy, "standing_position_for: grasp point is off the table");
  }

  struct Side {
    double dist_to_edge;      // grasp point to this table edge
    Eigen::Vector2d outward;  // unit normal of the edge
  };
  std::vector<Side> sides = {
      {grasp_xy.x() - t.min_x, {-1, 0}},
      {t.max_x - grasp_xy.x(), {1, 0}},
      {grasp_xy.y() - t.min_y, {0, -1}},
      {t.max_y - grasp_xy.y(), {0, 1}},
  };
  std::sort(sides.begin(), sides.end(),
            [](const Side& a, const Side& b) { return a.dist_to_edge < b.dist_to_edge; });

  const double dz = q.shoulder_height - q.grasp_height;
  const double standoff = q.safe_distance + 2e-3;  // strictly outside the keep-out
  for (const Side& side : sides) {
    const double horizontal = side.dist_to_edge + standoff - q.shoulder_forward;
    const double required = std::hypot(std::max(horizontal, 0.0), dz);
    if (required <= 0.9 * q.arm_reach) {
      const Eigen::Vector2d base =
          grasp_xy + side.outward * (side.dist_to_edge + standoff);
      const double yaw =
          std::atan2(grasp_xy.y() - base.y(), grasp_xy.x() - base.x());
      return {base.x(), base.y(), yaw};
    }
  }
  throw UnreachableGraspError(
      grasp_xy, "standing_position_for: grasp point (" +
                    std::to_string(grasp_xy.x()) + ", " +
                    std::to_string(grasp_xy.y()) +
                    ") is beyond arm reach from every free side");
}

std::vector<Waypoint> plan_route(const Eigen::Vector2d& from,
                                 const Waypoint& goal, const Rect& table,
                                 double safe_distance, double corner_margin) {
  const Rect keep_out = table.inflated(safe_distance);
  const Rect corner_rect = table.inflated(safe_distance + corner_margin);
  const Eigen::Vector2d g(goal.x, goal.y);

  auto visible = [&](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return !segment_crosses_rect(a, b, keep_out);
  };

  if (visible(from, g)) {
    return {goal};
  }

  // Visibility graph over the corners of the margin-inflated rectangle.
  std::vector<Eigen::Vector2d> nodes = {
      from,
      g,
      {corner_rect.min_x, corner_rect.min_y},
      {corner_rect.min_x, corner_rect.max_y},
      {corner_rect.max_x, corner_rect.min_y},
      {corner_rect.max_x, corner_rect.max_y},
  };
  const int n = static_cast<int>(nodes.size());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(n, inf);
  std::vector<int> prev(n, -1);
  std::vector<bool> done(n, false);
  dist[0] = 0.0;
  for (int it = 0; it < n; ++it) {
    int u = -1;
    for (int i = 0; i < n; ++i) {
      if (!done[i] && (u < 0 || dist[i] < dist[u])) u = i;
    }
    if (u < 0 || dist[u] == inf) break;
    done[u] = true;
    for (int v = 0; v < n; ++v) {
      if (done[v] || !visible(nodes[u], nodes[v])) continue;
      const double alt = dist[u] + (nodes[v] - nodes[u]).norm();
      if (alt < dist[v]) {
        dist[v] = alt;
        prev[v] = u;
      }
    }
  }
  if (dist[1] == inf) {
    throw std::runtime_error("plan_route: no clear path around the table");
  }

  std::vector<int> order;
  for (int v = 1; v != -1; v = prev[v]) order.push_back(v);
  std::reverse(order.begin(), order.end());

  std::vector<Waypoint> route;
  for (std::size_t i = 1; i < order.size(); ++i) {  // skip the start node
    const Eigen::Vector2d& p = nodes[order[i]];
    route.push_back({p.x(), p.y(), 0.0});
  }
  route.back().yaw = goal.yaw;
  return route;
}

}  // namespace clothspread::kin
