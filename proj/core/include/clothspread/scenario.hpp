#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "clothspread/cloth_sim.hpp"
#include "clothspread/kinematics.hpp"
#include "clothspread/spread_actions.hpp"

namespace clothspread::harness {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FeatureSpec {
  int id = 0;
  int grid_row = 0;
  int grid_col = 0;
  int dims = 2;
  Eigen::VectorXd target;  // dims entries
};

// Named initial-condition generators. Every recipe must leave the cloth
// statically settled and fully on the table before the run starts.
struct RecipeSpec {
  std::string kind = "none";  // none | folded_edge | shifted | rotated |
                              // corner_tuck | scripted
  double fraction = 0.0;      // folded_edge: folded length / cloth width
  std::string side = "left";  // folded_edge: left | right
  double lift = 0.003;        // folded_edge: layer gap so particles never coincide
  double dx = 0.0, dy = 0.0;  // shifted
  Eigen::Vector2d pivot = Eigen::Vector2d::Zero();  // rotated
  double angle = 0.0;                               // rotated, radians
  int feature_id = 0;         // corner_tuck
  double depth = 0.0;         // corner_tuck: how far the corner moves inward
  struct Displacement {
    int row = 0, col = 0;
    Eigen::Vector3d delta = Eigen::Vector3d::Zero();
  };
  std::vector<Displacement> displacements;  // scripted
  double settle_time = 3.0;                 // s budget to reach rest
};

struct ArmSpec {
  bool use_default = true;
  kin::ArmModel model;  // used when use_default is false
  Eigen::VectorXd home_joints;
  double ee_velocity_limit = 0.1;
};

struct ScenarioConfig {
  std::string scenario_id;
  std::uint64_t seed = 0;
  double max_sim_time = 300.0;

  sim::ClothConfig cloth;
  Eigen::Vector2d cloth_origin = Eigen::Vector2d::Zero();
  std::vector<FeatureSpec> features;
  std::vector<std::pair<int, int>> feature_pairs;
  sim::SensorModel sensor;
  ArmSpec arm;
  kin::BasePose base_start;
  bt::WorldParams params;  // controller, bt, and base tunables
  RecipeSpec recipe;

  // Throws ScenarioError naming the offending field.
  void validate() const;

  kin::ArmModel arm_model() const;
  Eigen::VectorXd stacked_targets() const;
  std::vector<sim::FeatureAttachment> attachments() const;
};

ScenarioConfig load_scenario(const std::filesystem::path& path);
ScenarioConfig scenario_from_json_text(const std::string& text,
                                       const std::string& origin = "<string>");
std::string serialize_scenario(const ScenarioConfig& config);

// Applies the deformation recipe to a rest state and settles it; throws
// ScenarioError if the cloth is still moving after the settle budget.
sim::ClothState prepare_cloth(const ScenarioConfig& config,
                              const sim::ClothModel& model);

bt::WorldInit make_world_init(const ScenarioConfig& config);

}  // namespace clothspread::harness
