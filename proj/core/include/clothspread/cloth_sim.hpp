#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "clothspread/deformation_control.hpp"
#include "clothspread/geometry.hpp"

namespace clothspread::sim {

// Particle-grid cloth resting on a table. Structural, shear and bend
// springs (tension-only), semi-implicit Euler, stick-slip table friction
// and a kinematic pin for the grasped particle. The controller never
// reads this model analytically; it only sees noisy feature measurements.

struct ClothConfig {
  double width = 0.72;   // m, along x (cols)
  double height = 0.35;  // m, along y (rows)
  int rows = 9;
  int cols = 19;
  double particle_mass = 2.0e-3;       // kg
  double stiffness_structural = 40.0;  // N/m
  double stiffness_shear = 15.0;       // N/m
  double stiffness_bend = 2.0;         // N/m
  double damping = 0.05;               // N*s/m viscous drag per particle
  double table_height = 0.28;          // m
  Rect table_extent{-0.3, -0.5, 1.3, 0.9};
  double friction_static_threshold = 0.05;  // N
  double friction_kinetic_coeff = 0.25;     // tangential velocity retention per step
  double gravity = 9.81;                    // m/s^2
  double dt = 1.0e-3;                       // s, physics substep
  int substeps_per_control_tick = 33;

  int particle_count() const { return rows * cols; }
  double spacing_x() const { return width / (cols - 1); }
  double spacing_y() const { return height / (rows - 1); }
  double control_period() const { return substeps_per_control_tick * dt; }

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct Grasp {
  int particle_index = -1;
  Eigen::Vector3d world_offset = Eigen::Vector3d::Zero();
};

struct ClothState {
  std::vector<Eigen::Vector3d> positions;
  std::vector<Eigen::Vector3d> velocities;
  std::optional<Grasp> grasp;
};

struct FeatureAttachment {
  int feature_id = 0;      // 1-based, unique and contiguous
  int particle_index = 0;  // row * cols + col
  int dims = 2;            // 2 reports (x, y); 3 reports (x, y, z)
};

struct SensorModel {
  double noise_stddev = 0.002;  // m per axis, zero mean
  std::uint64_t seed = 0;
  double rate_hz = 30.0;
};

class SimulationDivergedError : public std::runtime_error {
 public:
  SimulationDivergedError(int particle, const std::string& what)
      : std::runtime_error(what), particle_(particle) {}
  int particle() const { return particle_; }

 private:
  int particle_;
};

class ClothModel {
 public:
  explicit ClothModel(const ClothConfig& cfg);

  // Flat cloth at rest on the table, corner particle (0, 0) at origin_xy.
  ClothState make_rest_state(const Eigen::Vector2d& origin_xy) const;

  // One semi-implicit Euler substep. The grasped particle (if any) is
  // pinned to ee_position + offset after integration, exactly.
  void step(ClothState& state, const Eigen::Vector3d& ee_position,
            double dt) const;

  // Grabs the particle nearest to ee_position if it is within tolerance.
  // Returns false on a miss (the paper's occasional failed grab); throws
  // std::logic_error if a grasp is already set.
  bool attach_grasp(ClothState& state, const Eigen::Vector3d& ee_position,
                    double tolerance) const;

  // Idempotent.
  void release_grasp(ClothState& state) const;

  // Stacked coordinates of the attached particles in feature_id order,
  // with per-axis Gaussian noise. The tick index selects the noise draw,
  // so identical (state, sensor, tick) give identical output.
  ctrl::FeatureVector measure_features(
      const ClothState& state, std::span<const FeatureAttachment> attachments,
      const SensorModel& sensor, std::uint64_t tick, double timestamp) const;

  // Noise-free feature positions (ground truth for metrics and tests).
  ctrl::FeatureVector true_features(
      const ClothState& state, std::span<const FeatureAttachment> attachments,
      double timestamp) const;

  double kinetic_energy(const ClothState& state) const;
  double max_speed(const ClothState& state) const;

  const ClothConfig& config() const { return cfg_; }

  int particle_index(int row, int col) const { return row * cfg_.cols + col; }

  // Grid hop count between two particles (diminishing-rigidity checks).
  int grid_distance(int a, int b) const;

  struct Spring {
    int a;
    int b;
    double rest_length;
    double stiffness;
  };
  const std::vector<Spring>& springs() const { return springs_; }

 private:
  ClothConfig cfg_;
  std::vector<Spring> springs_;
};

void validate_attachments(std::span<const FeatureAttachment> attachments,
                          const ClothConfig& cfg);

}  // namespace clothspread::sim
