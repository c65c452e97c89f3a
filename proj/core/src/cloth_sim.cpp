#include "clothspread/cloth_sim.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "clothspread/rng.hpp"

namespace clothspread::sim {

namespace {

constexpr std::uint64_t kSensorStream = 0x5e5e5e5e01ULL;

void require(bool ok, const std::string& field, const std::string& msg) {
  if (!ok) throw std::invalid_argument("cloth." + field + ": " + msg);
}

}  // namespace

void ClothConfig::validate() const {
  require(rows >= 2, "rows", "must be >= 2");
  require(cols >= 2, "cols", "must be >= 2");
  require(width > 0.0, "width", "must be > 0");
  require(height > 0.0, "height", "must be > 0");
  require(spacing_x() > 0.0, "width", "rest length must be > 0");
  require(spacing_y() > 0.0, "height", "rest length must be > 0");
  require(particle_mass > 0.0, "particle_mass", "must be > 0");
  require(stiffness_structural >= 0.0, "stiffness_structural", "must be >= 0");
  require(stiffness_shear >= 0.0, "stiffness_shear", "must be >= 0");
  require(stiffness_bend >= 0.0, "stiffness_bend", "must be >= 0");
  require(damping >= 0.0, "damping", "must be >= 0");
  require(dt > 0.0, "dt", "must be > 0");
  require(substeps_per_control_tick >= 1, "substeps_per_control_tick",
          "must be >= 1");
  require(friction_static_threshold >= 0.0, "friction_static_threshold",
          "must be >= 0");
  require(friction_kinetic_coeff >= 0.0 && friction_kinetic_coeff <= 1.0,
          "friction_kinetic_coeff", "must be in [0, 1]");
  require(table_extent.valid(), "table_extent", "must have positive area");
}

ClothModel::ClothModel(const ClothConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const double lx = cfg_.spacing_x();
  const double ly = cfg_.spacing_y();
  const double ld = std::hypot(lx, ly);

  auto add = [&](int ra, int ca, int rb, int cb, double rest, double k) {
    if (k <= 0.0) return;
    springs_.push_back({particle_index(ra, ca), particle_index(rb, cb), rest, k});
  };

  for (int r = 0; r < cfg_.rows; ++r) {
    for (int c = 0; c < cfg_.cols; ++c) {
      // structural: 4-neighbor
      if (c + 1 < cfg_.cols) add(r, c, r, c + 1, lx, cfg_.stiffness_structural);
      if (r + 1 < cfg_.rows) add(r, c, r + 1, c, ly, cfg_.stiffness_structural);
      // shear: diagonals
      if (r + 1 < cfg_.rows && c + 1 < cfg_.cols) {
        add(r, c, r + 1, c + 1, ld, cfg_.stiffness_shear);
        add(r, c + 1, r + 1, c, ld, cfg_.stiffness_shear);
      }
      // bend: 2-hop
      if (c + 2 < cfg_.cols) add(r, c, r, c + 2, 2 * lx, cfg_.stiffness_bend);
      if (r + 2 < cfg_.rows) add(r, c, r + 2, c, 2 * ly, cfg_.stiffness_bend);
    }
  }
}

ClothState ClothModel::make_rest_state(const Eigen::Vector2d& origin_xy) const {
  ClothState state;
  state.positions.resize(cfg_.particle_count());
  state.velocities.assign(cfg_.particle_count(), Eigen::Vector3d::Zero());
  for (int r = 0; r < cfg_.rows; ++r) {
    for (int c = 0; c < cfg_.cols; ++c) {
      state.positions[particle_index(r, c)] =
          Eigen::Vector3d(origin_xy.x() + c * cfg_.spacing_x(),
                          origin_xy.y() + r * cfg_.spacing_y(),
                          cfg_.table_height);
    }
  }
  return state;
}

void ClothModel::step(ClothState& state, const Eigen::Vector3d& ee_position,
                      double dt) const {
  const int n = cfg_.particle_count();
  static thread_local std::vector<Eigen::Vector3d> forces;
  forces.assign(n, Eigen::Vector3d(0.0, 0.0, -cfg_.particle_mass * cfg_.gravity));

  for (int i = 0; i < n; ++i) {
    forces[i] -= cfg_.damping * state.velocities[i];
  }

  for (const Spring& s : springs_) {
    const Eigen::Vector3d d = state.positions[s.b] - state.positions[s.a];
    const double len = d.norm();
    if (len < 1e-9) continue;  // coincident endpoints carry no direction
    const double stretch = len - s.rest_length;
    // Tension only: cloth buckles rather than resisting in-plane
    // compression, so folded and tucked configurations are equilibria.
    if (stretch <= 0.0) continue;
    const Eigen::Vector3d f = (s.stiffness * stretch / len) * d;
    forces[s.a] += f;
    forces[s.b] -= f;
  }

  const int pinned_index = state.grasp ? state.grasp->particle_index : -1;
  const double inv_m = 1.0 / cfg_.particle_mass;
  for (int i = 0; i < n; ++i) {
    if (i == pinned_index) continue;
    state.velocities[i] += forces[i] * (inv_m * dt);
    state.positions[i] += state.velocities[i] * dt;

    // Table contact with stick-slip friction.
    Eigen::Vector3d& p = state.positions[i];
    if (p.z() < cfg_.table_height && cfg_.table_extent.contains(p.x(), p.y())) {
      p.z() = cfg_.table_height;
      Eigen::Vector3d& v = state.velocities[i];
      if (v.z() < 0.0) v.z() = 0.0;
      const double tangential_force = std::hypot(forces[i].x(), forces[i].y());
      if (tangential_force < cfg_.friction_static_threshold) {
        v.x() = 0.0;
        v.y() = 0.0;
      } else {
        v.x() *= cfg_.friction_kinetic_coeff;
        v.y() *= cfg_.friction_kinetic_coeff;
      }
    }
  }

  if (state.grasp) {
    const Grasp& g = *state.grasp;
    Eigen::Vector3d pinned = ee_position + g.world_offset;
    // Fixed-point contact in the plane; the table is unilateral in z, so a
    // gripper pressing down cannot push the pinch point through the surface.
    if (pinned.z() < cfg_.table_height &&
        cfg_.table_extent.contains(pinned.x(), pinned.y())) {
      pinned.z() = cfg_.table_height;
    }
    state.velocities[g.particle_index] =
        (pinned - state.positions[g.particle_index]) / dt;  // motion over this step
    state.positions[g.particle_index] = pinned;
  }

  for (int i = 0; i < n; ++i) {
    if (!state.positions[i].allFinite() || !state.velocities[i].allFinite()) {
      throw SimulationDivergedError(
          i, "cloth simulation diverged: particle " + std::to_string(i) +
                 " became non-finite");
    }
  }
}

bool ClothModel::attach_grasp(ClothState& state,
                              const Eigen::Vector3d& ee_position,
                              double tolerance) const {
  if (state.grasp) {
    throw std::logic_error("attach_grasp: grasp already set");
  }
  int best = -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (int i = 0; i < cfg_.particle_count(); ++i) {
    const double d2 = (state.positions[i] - ee_position).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = i;
    }
  }
  if (best < 0 || std::sqrt(best_d2) > tolerance) {
    return false;
  }
  state.grasp = Grasp{best, state.positions[best] - ee_position};
  return true;
}

void ClothModel::release_grasp(ClothState& state) const {
  state.grasp.reset();
}

ctrl::FeatureVector ClothModel::measure_features(
    const ClothState& state, std::span<const FeatureAttachment> attachments,
    const SensorModel& sensor, std::uint64_t tick, double timestamp) const {
  ctrl::FeatureVector out = true_features(state, attachments, timestamp);
  if (sensor.noise_stddev > 0.0) {
    SplitMix64 rng(mix_seed(sensor.seed, kSensorStream, tick));
    for (int i = 0; i < out.size(); ++i) {
      out.values[i] += rng.next_gaussian(sensor.noise_stddev);
    }
  }
  return out;
}

ctrl::FeatureVector ClothModel::true_features(
    const ClothState& state, std::span<const FeatureAttachment> attachments,
    double timestamp) const {
  if (attachments.empty()) {
    throw std::invalid_argument("measure_features: attachments must be non-empty");
  }
  std::vector<FeatureAttachment> sorted(attachments.begin(), attachments.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const FeatureAttachment& a, const FeatureAttachment& b) {
              return a.feature_id < b.feature_id;
            });

  const int d = sorted.front().dims;
  ctrl::FeatureVector out;
  out.dims = d;
  out.feature_count = static_cast<int>(sorted.size());
  out.timestamp = timestamp;
  out.values.resize(d * out.feature_count);
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const Eigen::Vector3d& p = state.positions[sorted[i].particle_index];
    for (int a = 0; a < d; ++a) {
      out.values[static_cast<int>(i) * d + a] = p[a];
    }
  }
  return out;
}

double ClothModel::kinetic_energy(const ClothState& state) const {
  double e = 0.0;
  for (const auto& v : state.velocities) {
    e += 0.5 * cfg_.particle_mass * v.squaredNorm();
  }
  return e;
}

double ClothModel::max_speed(const ClothState& state) const {
  double m = 0.0;
  for (const auto& v : state.velocities) {
    m = std::max(m, v.norm());
  }
  return m;
}

int ClothModel::grid_distance(int a, int b) const {
  const int ra = a / cfg_.cols, ca = a % cfg_.cols;
  const int rb = b / cfg_.cols, cb = b % cfg_.cols;
  return std::abs(ra - rb) + std::abs(ca - cb);
}

void validate_attachments(std::span<const FeatureAttachment> attachments,
                          const ClothConfig& cfg) {
  if (attachments.empty()) {
    throw std::invalid_argument("features: must be non-empty");
  }
  std::vector<int> ids;
  const int dims = attachments.front().dims;
  for (const auto& att : attachments) {
    if (att.dims != 2 && att.dims != 3) {
      throw std::invalid_argument("features.dims: must be 2 or 3");
    }
    if (att.dims != dims) {
      throw std::invalid_argument("features.dims: must match across features");
    }
    if (att.particle_index < 0 || att.particle_index >= cfg.particle_count()) {
      throw std::invalid_argument("features.particle_index: out of grid bounds");
    }
    ids.push_back(att.feature_id);
  }
  std::sort(ids.begin(), ids.end());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] != static_cast<int>(i) + 1) {
      throw std::invalid_argument(
          "features.id: ids must be unique and contiguous from 1");
    }
  }
}

}  // namespace clothspread::sim
