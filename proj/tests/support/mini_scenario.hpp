#pragma once

#include <string>

namespace clothspread::testing {

// A small, fast scenario: coarse grid, one tucked corner, single grasp.
// Geometry mirrors the bundled files but runs in well under a second.
inline std::string mini_scenario_text() {
  return R"json({
  "scenario_id": "mini",
  "seed": 7,
  "max_sim_time": 25.0,
  "cloth": {
    "width": 0.72, "height": 0.35, "rows": 5, "cols": 10,
    "particle_mass": 0.004,
    "stiffness_structural": 40.0, "stiffness_shear": 15.0, "stiffness_bend": 2.0,
    "damping": 0.08,
    "table_height": 0.28,
    "table_extent": {"min_x": -0.14, "min_y": -0.25, "max_x": 1.0, "max_y": 0.6},
    "friction_static_threshold": 0.06,
    "friction_kinetic_coeff": 0.25,
    "gravity": 9.81,
    "dt": 0.001,
    "substeps_per_control_tick": 33,
    "origin": [0.0, 0.0]
  },
  "features": [
    {"id": 1, "grid_row": 4, "grid_col": 9, "dims": 2, "target": [0.72, 0.35]},
    {"id": 2, "grid_row": 4, "grid_col": 0, "dims": 2, "target": [0.0, 0.35]},
    {"id": 3, "grid_row": 0, "grid_col": 0, "dims": 2, "target": [0.0, 0.0]},
    {"id": 4, "grid_row": 0, "grid_col": 9, "dims": 2, "target": [0.72, 0.0]}
  ],
  "feature_pairs": [[2, 3], [1, 4]],
  "sensor": {"noise_stddev": 0.001, "rate_hz": 30.0},
  "arm": {
    "preset": "default_six_dof",
    "home_joints": [0.0, 0.6, -1.1, 0.0, 0.5, 0.0],
    "ee_velocity_limit": 0.12
  },
  "base": {
    "start": [-0.75, 0.2, 0.0],
    "height": 0.30,
    "speed": 0.3,
    "safe_distance": 0.22,
    "corner_margin": 0.05
  },
  "controller": {
    "gain": 3.5,
    "alpha": 0.1,
    "min_dx_norm": 0.001,
    "convergence_threshold": 0.032,
    "convergence_hold": 1.0,
    "max_duration": 15.0,
    "ee_speed_cap": 0.05,
    "task_mode": "hold_complement"
  },
  "bt": {
    "retry_count": 5,
    "grasp_tolerance": 0.012,
    "grasp_clearance": 0.006,
    "approach_speed": 0.1,
    "check_window": 0.8,
    "check_speed": 0.02,
    "check_threshold": 0.005,
    "vertical_offset_bound": 0.01,
    "flatten_tolerance": 0.035,
    "grasp_height_error": 0.0,
    "grasp_height_error_attempts": 0
  },
  "recipe": {
    "kind": "corner_tuck",
    "feature_id": 2,
    "depth": 0.06,
    "lift": 0.002,
    "settle_time": 3.0
  }
})json";
}

}  // namespace clothspread::testing
