#include "clothspread/spread_actions.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "clothspread/rng.hpp"

namespace clothspread::bt {

namespace {

constexpr std::uint64_t kRetryStream = 0x0ffe7e701dULL;

World& world_of(Blackboard& bb) { return *bb.get<World*>(keys::world); }

long current_cycle(Blackboard& bb) {
  return bb.has(GuardedLoopNode::kCycleKey)
             ? bb.get<long>(GuardedLoopNode::kCycleKey)
             : 0;
}

template <typename T>
std::shared_ptr<T> ensure_state(Blackboard& bb, const char* key) {
  if (!bb.has(key)) {
    bb.set(key, std::make_shared<T>());
  }
  return bb.get<std::shared_ptr<T>>(key);
}

}  // namespace

World::World(WorldInit init)
    : init_(std::move(init)), model_(init_.cloth), cloth_(init_.initial_cloth) {
  sim::validate_attachments(init_.attachments, init_.cloth);
  init_.arm.validate();
  if (init_.home_joints.size() != init_.arm.dof()) {
    throw std::invalid_argument("world: home joint count mismatch");
  }
  for (int i = 0; i < init_.arm.dof(); ++i) {
    if (init_.home_joints[i] < init_.arm.joints[i].limit_lo ||
        init_.home_joints[i] > init_.arm.joints[i].limit_hi) {
      throw std::invalid_argument("arm.home_joints[" + std::to_string(i) +
                                  "]: outside joint limits");
    }
  }
  const int d = init_.attachments.front().dims;
  if (init_.targets.size() !=
      static_cast<int>(init_.attachments.size()) * d) {
    throw std::invalid_argument("world: target vector length mismatch");
  }
  robot_.base = init_.base_start;
  robot_.arm_joints = init_.home_joints;
}

ctrl::FeatureVector World::measure_now() const {
  return model_.measure_features(cloth_, init_.attachments, init_.sensor,
                                 tick_, time());
}

ctrl::FeatureVector World::true_now() const {
  return model_.true_features(cloth_, init_.attachments, time());
}

Eigen::Vector3d World::ee_position() const {
  return kin::forward_kinematics(robot_, init_.arm).position;
}

Eigen::VectorXd World::target_of(int feature_id) const {
  const int d = feature_dims();
  return init_.targets.segment((feature_id - 1) * d, d);
}

int World::partner_of(int feature_id) const {
  for (const auto& [a, b] : init_.feature_pairs) {
    if (a == feature_id) return b;
    if (b == feature_id) return a;
  }
  return feature_id;
}

bool World::attach_grasp_at_ee() {
  return model_.attach_grasp(cloth_, ee_position(), init_.params.grasp_tolerance);
}

void World::release_grasp() { model_.release_grasp(cloth_); }

void World::advance_period(const Eigen::Vector3d& ee_from,
                           const Eigen::Vector3d& ee_to) {
  const int substeps = init_.cloth.substeps_per_control_tick;
  for (int k = 1; k <= substeps; ++k) {
    const double a = static_cast<double>(k) / substeps;
    const Eigen::Vector3d ee = (1.0 - a) * ee_from + a * ee_to;
    model_.step(cloth_, ee, init_.cloth.dt);
  }
  ++tick_;
  if (recorder) {
    recorder->on_world_tick(tick_, time(), robot_, true_now());
  }
}

void World::command_arm(const Eigen::Vector3d& ee_velocity) {
  const Eigen::Vector3d ee_from = ee_position();
  const kin::IkResult ik =
      kin::ik_velocity(robot_, init_.arm, ee_velocity, /*frozen_base=*/true);
  kin::integrate_joints(robot_, init_.arm, ik.joint_velocities, control_period());
  advance_period(ee_from, ee_position());
}

void World::command_joints_toward(const Eigen::VectorXd& target_joints) {
  if (target_joints.size() != robot_.arm_joints.size()) {
    throw std::invalid_argument("command_joints_toward: joint count mismatch");
  }
  const Eigen::Vector3d ee_from = ee_position();
  const double max_step = init_.params.home_joint_speed * control_period();
  for (int i = 0; i < robot_.arm_joints.size(); ++i) {
    const double delta = target_joints[i] - robot_.arm_joints[i];
    robot_.arm_joints[i] += std::clamp(delta, -max_step, max_step);
  }
  advance_period(ee_from, ee_position());
}

bool World::walk_step(kin::BasePlan& plan) {
  const Eigen::Vector3d ee_from = ee_position();
  const bool arrived = kin::advance_base(robot_, plan, control_period());
  advance_period(ee_from, ee_position());
  return arrived;
}

int World::begin_standing_position(const kin::Waypoint& pose) {
  ++standing_serial_;
  if (recorder) recorder->on_standing_position(standing_serial_, pose);
  return standing_serial_;
}

int World::begin_grasp_session() { return ++grasp_serial_; }

void World::record_grasp_attempt() {
  ++attempt_serial_;
  if (recorder) recorder->on_grasp_attempt(standing_serial_);
}

double World::grasp_height_error_now() const {
  return attempt_serial_ < init_.params.grasp_height_error_attempts
             ? init_.params.grasp_height_error
             : 0.0;
}

double World::draw_retry_offset() {
  SplitMix64 rng(mix_seed(init_.params.seed, kRetryStream,
                          static_cast<std::uint64_t>(retry_draws_++)));
  return rng.next_uniform(-init_.params.vertical_offset_bound,
                          init_.params.vertical_offset_bound);
}

kin::StandingQuery World::make_standing_query() const {
  kin::StandingQuery q;
  q.table_extent = init_.cloth.table_extent;
  q.safe_distance = init_.params.safe_distance;
  q.arm_reach = init_.arm.reach();

  // Shoulder pose at home configuration: base origin plus the first two
  // link offsets (yaw-independent heights, forward offset toward the grasp).
  Eigen::Vector3d shoulder = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < std::min<std::size_t>(2, init_.arm.joints.size()); ++i) {
    shoulder += init_.arm.joints[i].offset;
  }
  q.shoulder_height = init_.base_start.z + shoulder.z();
  q.shoulder_forward = std::hypot(shoulder.x(), shoulder.y());
  q.grasp_height = init_.cloth.table_height;
  return q;
}

namespace {

// ---------------------------------------------------------------------
// InitializeWholeRobotSystem: drive the arm to its home joint vector and
// mark the platform standing. Runs once per scenario.
// ---------------------------------------------------------------------

TickStatus initialize_tick(Blackboard& bb) {
  if (bb.has(keys::init_done) && bb.get<bool>(keys::init_done)) {
    return TickStatus::success;
  }
  World& w = world_of(bb);
  const Eigen::VectorXd& target = w.home_joints();
  const double err = (w.robot().arm_joints - target).cwiseAbs().maxCoeff();
  if (err <= w.params().home_tolerance) {
    bb.set(keys::init_done, true);
    bb.set("base.standing", true);
    return TickStatus::success;
  }
  w.command_joints_toward(target);
  return TickStatus::running;
}

// ---------------------------------------------------------------------
// WalkToFeaturePoint: pick the nearest feature that has not reached its
// target, compute a standing pose with clearance, track waypoints there.
// ---------------------------------------------------------------------

struct WalkState {
  long cycle = -1;
  int phase = 0;  // 0 select, 1 walking, 2 arrived
  kin::BasePlan plan;
  int grasp_feature = 0;
  std::vector<int> controlled;
};

TickStatus walk_tick(Blackboard& bb) {
  World& w = world_of(bb);
  auto st = ensure_state<WalkState>(bb, keys::walk_state);
  const long cycle = current_cycle(bb);
  if (st->cycle != cycle) {
    st->cycle = cycle;
    st->phase = 0;
  }

  if (st->phase == 2) {
    return TickStatus::success;
  }

  if (st->phase == 0) {
    const ctrl::FeatureVector s = w.measure_now();
    const int d = s.dims;

    int best = -1;
    double best_dist = 0.0;
    for (int f = 1; f <= s.feature_count; ++f) {
      const Eigen::VectorXd meas = s.values.segment((f - 1) * d, d);
      const double off = (meas - w.target_of(f)).norm();
      if (off <= w.params().flatten_tolerance) continue;  // already there
      const double dist = std::hypot(meas[0] - w.robot().base.x,
                                     meas[1] - w.robot().base.y);
      if (best < 0 || dist < best_dist - 1e-12) {
        best = f;
        best_dist = dist;
      }
    }
    if (best < 0) {
      return TickStatus::success;  // nothing left; the loop guard closes
    }
    st->grasp_feature = best;
    st->controlled = {best, w.partner_of(best)};
    std::sort(st->controlled.begin(), st->controlled.end());
    st->controlled.erase(
        std::unique(st->controlled.begin(), st->controlled.end()),
        st->controlled.end());

    const Eigen::VectorXd meas = s.values.segment((best - 1) * d, d);
    const Eigen::VectorXd tgt = w.target_of(best);
    // Anchor the stand on the midpoint of the drag so both the grasp point
    // and its target stay within reach from one standing position.
    const Eigen::Vector2d anchor(0.5 * (meas[0] + tgt[0]),
                                 0.5 * (meas[1] + tgt[1]));
    kin::Waypoint standing;
    try {
      standing = kin::standing_position_for(anchor, w.make_standing_query());
    } catch (const kin::UnreachableGraspError&) {
      return TickStatus::failure;
    }
    st->plan.speed = w.params().base_speed;
    st->plan.safe_distance = w.params().safe_distance;
    st->plan.waypoints = kin::plan_route(
        {w.robot().base.x, w.robot().base.y}, standing,
        w.cloth_model().config().table_extent, w.params().safe_distance,
        w.params().corner_margin);
    w.begin_standing_position(standing);
    st->phase = 1;
  }

  if (w.walk_step(st->plan)) {
    st->phase = 2;
    return TickStatus::success;
  }
  return TickStatus::running;
}

// ---------------------------------------------------------------------
// MoveEndEffectorAndCheckIfClothMoveTogether: approach the grasp point,
// close on it, probe horizontally and require the closest feature to move
// with the hand. A miss redraws the vertical approach offset and fails.
// ---------------------------------------------------------------------

struct GraspState {
  long cycle = -1;
  bool verified = false;
  int phase = 0;  // 0 aim, 1 approach, 2 observe
  double retry_offset = 0.0;
  Eigen::Vector3d target = Eigen::Vector3d::Zero();
  Eigen::Vector2d check_dir = Eigen::Vector2d::UnitX();
  int observe_ticks_total = 0;
  int observe_tick = 0;
  int avg_window = 0;
  Eigen::Vector2d first_acc = Eigen::Vector2d::Zero();
  Eigen::Vector2d last_acc = Eigen::Vector2d::Zero();
};

TickStatus grasp_check_tick(Blackboard& bb) {
  World& w = world_of(bb);
  auto walk = bb.get<std::shared_ptr<WalkState>>(keys::walk_state);
  auto st = ensure_state<GraspState>(bb, keys::grasp_state);
  const long cycle = current_cycle(bb);
  if (st->cycle != cycle) {
    *st = GraspState{};
    st->cycle = cycle;
  }

  if (st->verified) {
    return TickStatus::success;
  }

  if (st->phase == 0) {
    const ctrl::FeatureVector s = w.measure_now();
    const int d = s.dims;
    const int f = walk->grasp_feature;
    const Eigen::VectorXd meas = s.values.segment((f - 1) * d, d);
    // The sensor reports x-y only; depth is assumed at the nominal grasp
    // plane, which is exactly the error source the retry offset
    // compensates for.
    const double z = w.cloth_model().config().table_height +
                     w.params().grasp_clearance + w.grasp_height_error_now() +
                     st->retry_offset;
    st->target = Eigen::Vector3d(meas[0], meas[1], z);
    w.record_grasp_attempt();
    st->phase = 1;
  }

  if (st->phase == 1) {
    const Eigen::Vector3d ee = w.ee_position();
    const Eigen::Vector3d to = st->target - ee;
    if (to.norm() <= w.params().approach_tolerance) {
      w.attach_grasp_at_ee();  // may miss; the probe below finds out

      const ctrl::FeatureVector s = w.measure_now();
      const int d = s.dims;
      const int f = walk->grasp_feature;
      const Eigen::Vector2d meas(s.values[(f - 1) * d],
                                 s.values[(f - 1) * d + 1]);
      const Eigen::VectorXd tgt = w.target_of(f);
      Eigen::Vector2d dir(tgt[0] - meas.x(), tgt[1] - meas.y());
      st->check_dir = dir.norm() > 1e-3 ? dir.normalized()
                                        : Eigen::Vector2d::UnitX();
      st->observe_ticks_total = std::max(
          4, static_cast<int>(std::ceil(w.params().check_window /
                                        w.control_period())));
      st->avg_window = std::max(1, std::min(5, st->observe_ticks_total / 3));
      st->observe_tick = 0;
      st->first_acc.setZero();
      st->last_acc.setZero();
      st->phase = 2;
    } else {
      const double speed =
          std::min(w.params().approach_speed, to.norm() / w.control_period());
      w.command_arm(to.normalized() * speed);
      return TickStatus::running;
    }
  }

  // phase 2: horizontal probe while watching the closest feature
  const ctrl::FeatureVector s = w.measure_now();
  const int d = s.dims;
  const int f = walk->grasp_feature;
  const Eigen::Vector2d meas(s.values[(f - 1) * d], s.values[(f - 1) * d + 1]);
  if (st->observe_tick < st->avg_window) {
    st->first_acc += meas;
  }
  if (st->observe_tick >= st->observe_ticks_total - st->avg_window) {
    st->last_acc += meas;
  }
  ++st->observe_tick;

  if (st->observe_tick >= st->observe_ticks_total) {
    const Eigen::Vector2d displacement =
        (st->last_acc - st->first_acc) / st->avg_window;
    if (displacement.norm() >= w.params().check_threshold) {
      st->verified = true;
      return TickStatus::success;
    }
    w.release_grasp();
    st->retry_offset = w.draw_retry_offset();
    st->phase = 0;
    return TickStatus::failure;
  }

  const Eigen::Vector3d u(st->check_dir.x() * w.params().check_speed,
                          st->check_dir.y() * w.params().check_speed, 0.0);
  w.command_arm(u);
  return TickStatus::running;
}

// ---------------------------------------------------------------------
// DeformationControl: run the model-free controller over the full feature
// set; uncontrolled features are either held at their scenario target or
// pinned to their measured position at grasp time.
// ---------------------------------------------------------------------

// The cloth is manipulated within the horizontal plane: features carry
// (x, y) only and the table blocks descent, so the command space the
// estimator sees is planar. The plant holds the grasp height itself.
class WorldPlant : public ctrl::ControlPlant {
 public:
  WorldPlant(World& w, double z_hold) : w_(w), z_hold_(z_hold) {}

  ctrl::FeatureVector measure() override { return w_.measure_now(); }

  Eigen::VectorXd ee_position() const override {
    return w_.ee_position().head<2>();
  }

  void apply_command(const Eigen::VectorXd& u) override {
    const double z = w_.ee_position().z();
    const double z_correction =
        std::clamp((z_hold_ - z) / w_.control_period(), -0.01, 0.01);
    w_.command_arm({u[0], u[1], z_correction});
  }

  bool grasp_held() const override { return w_.grasp_held(); }
  double time() const override { return w_.time(); }
  double control_period() const override { return w_.control_period(); }

 private:
  World& w_;
  double z_hold_;
};

struct DeformState {
  long cycle = -1;
  std::shared_ptr<WorldPlant> plant;
  std::shared_ptr<ctrl::DeformationSession> session;
  int grasp_serial = 0;
  int grasp_feature = 0;
  double start_time = 0.0;
};

TickStatus deformation_tick(Blackboard& bb) {
  World& w = world_of(bb);
  auto walk = bb.get<std::shared_ptr<WalkState>>(keys::walk_state);
  auto st = ensure_state<DeformState>(bb, keys::deform_state);
  const long cycle = current_cycle(bb);

  if (st->cycle != cycle) {
    st->cycle = cycle;
    st->grasp_serial = w.begin_grasp_session();
    st->grasp_feature = walk->grasp_feature;
    st->start_time = w.time();

    const int d = w.feature_dims();
    const int k = w.feature_count();
    const int m = d * k;

    ctrl::TaskFunction task;
    task.selector.resize(m);
    for (int i = 0; i < m; ++i) task.selector[i] = i;
    task.target = w.targets();
    if (w.params().hold_complement) {
      const ctrl::FeatureVector s = w.measure_now();
      for (int f = 1; f <= k; ++f) {
        const bool controlled =
            std::find(walk->controlled.begin(), walk->controlled.end(), f) !=
            walk->controlled.end();
        if (!controlled) {
          task.target.segment((f - 1) * d, d) = s.values.segment((f - 1) * d, d);
        }
      }
    }

    ctrl::ControllerConfig cfg;
    cfg.gain = w.params().gain * Eigen::MatrixXd::Identity(m, m);
    cfg.convergence_threshold = w.params().convergence_threshold;
    cfg.convergence_hold = w.params().convergence_hold;
    cfg.max_duration = w.params().max_duration;
    cfg.ee_speed_cap = w.params().ee_speed_cap;

    // One identity block per feature, on the planar command space.
    ctrl::JacobianEstimate est = ctrl::JacobianEstimate::feature_block_identity(
        k, d, 2, w.params().alpha, w.params().min_dx_norm);

    st->plant = std::make_shared<WorldPlant>(w, w.ee_position().z());
    st->session = std::make_shared<ctrl::DeformationSession>(
        *st->plant, std::move(task), std::move(cfg), std::move(est));
  }

  const auto status = st->session->step();
  if (!st->session->ticks().empty() && w.recorder) {
    w.recorder->on_controller_tick(st->grasp_serial,
                                   st->session->ticks().back(),
                                   st->session->task().target);
  }

  switch (status) {
    case ctrl::DeformationSession::Status::running:
      return TickStatus::running;
    case ctrl::DeformationSession::Status::converged:
      if (w.recorder) {
        w.recorder->on_deformation_result(
            st->grasp_serial, st->grasp_feature, ctrl::DeformationResult::converged,
            st->session->final_error(), st->start_time, w.time(),
            static_cast<long>(st->session->ticks().size()));
      }
      w.release_grasp();
      return TickStatus::success;
    case ctrl::DeformationSession::Status::grasp_lost:
      if (w.recorder) {
        w.recorder->on_deformation_result(
            st->grasp_serial, st->grasp_feature, ctrl::DeformationResult::grasp_lost,
            st->session->final_error(), st->start_time, w.time(),
            static_cast<long>(st->session->ticks().size()));
      }
      w.release_grasp();
      return TickStatus::failure;
    case ctrl::DeformationSession::Status::timeout:
    default:
      if (w.recorder) {
        w.recorder->on_deformation_result(
            st->grasp_serial, st->grasp_feature, ctrl::DeformationResult::timeout,
            st->session->final_error(), st->start_time, w.time(),
            static_cast<long>(st->session->ticks().size()));
      }
      w.release_grasp();
      return TickStatus::failure;
  }
}

// ---------------------------------------------------------------------
// IsClothFlattened: every measured feature within flatten_tolerance of
// its scenario target.
// ---------------------------------------------------------------------

bool flattened_predicate(Blackboard& bb) {
  World& w = world_of(bb);
  const ctrl::FeatureVector s = w.measure_now();
  const int d = s.dims;
  bool ok = true;
  for (int f = 1; f <= s.feature_count; ++f) {
    const Eigen::VectorXd meas = s.values.segment((f - 1) * d, d);
    if ((meas - w.target_of(f)).norm() > w.params().flatten_tolerance) {
      ok = false;
      break;
    }
  }
  bb.set(keys::flattened, ok);
  return ok;
}

}  // namespace

NodePtr make_initialize_action() {
  return std::make_unique<ActionNode>("InitializeWholeRobotSystem",
                                      initialize_tick);
}

NodePtr make_walk_action() {
  return std::make_unique<ActionNode>("WalkToFeaturePoint", walk_tick);
}

NodePtr make_grasp_check_action() {
  return std::make_unique<ActionNode>(
      "MoveEndEffectorAndCheckIfClothMoveTogether", grasp_check_tick);
}

NodePtr make_deformation_action() {
  return std::make_unique<ActionNode>("DeformationControl", deformation_tick);
}

NodePtr make_flattened_condition() {
  return std::make_unique<ConditionNode>("IsClothFlattened",
                                         flattened_predicate);
}

Tree build_spreading_tree(int retry_count) {
  std::vector<NodePtr> body_children;
  body_children.push_back(make_walk_action());
  body_children.push_back(std::make_unique<RetryNode>(
      "RetryGraspCheck", retry_count, make_grasp_check_action()));
  body_children.push_back(make_deformation_action());
  auto body = std::make_unique<SequenceNode>("GraspAndSpread",
                                             std::move(body_children));

  auto loop = std::make_unique<GuardedLoopNode>(
      "SpreadUntilFlattened", make_flattened_condition(), std::move(body));

  std::vector<NodePtr> root_children;
  root_children.push_back(make_initialize_action());
  root_children.push_back(std::move(loop));
  return Tree(
      std::make_unique<SequenceNode>("Root", std::move(root_children)));
}

}  // namespace clothspread::bt
