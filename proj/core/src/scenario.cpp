#include "clothspread/scenario.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace clothspread::harness {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ScenarioError(path + ": " + msg);
}

const json& member(const json& j, const std::string& path, const char* key) {
  if (!j.is_object()) fail(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) fail(path + "." + key, "missing field");
  return *it;
}

double num_field(const json& j, const std::string& path, const char* key) {
  const json& v = member(j, path, key);
  if (!v.is_number()) fail(path + "." + key, "expected a number");
  return v.get<double>();
}

double num_or(const json& j, const char* key, double fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return j.at(key).get<double>();
}

int int_field(const json& j, const std::string& path, const char* key) {
  const json& v = member(j, path, key);
  if (!v.is_number_integer()) fail(path + "." + key, "expected an integer");
  return v.get<int>();
}

int int_or(const json& j, const char* key, int fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return j.at(key).get<int>();
}

std::string str_field(const json& j, const std::string& path, const char* key) {
  const json& v = member(j, path, key);
  if (!v.is_string()) fail(path + "." + key, "expected a string");
  return v.get<std::string>();
}

Eigen::VectorXd vec_field(const json& j, const std::string& path,
                          const char* key, int expected = -1) {
  const json& v = member(j, path, key);
  if (!v.is_array()) fail(path + "." + key, "expected an array");
  if (expected >= 0 && static_cast<int>(v.size()) != expected) {
    fail(path + "." + key,
         "expected " + std::to_string(expected) + " entries");
  }
  Eigen::VectorXd out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<int>(i)] = v[i].get<double>();
  return out;
}

json vec_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

}  // namespace

void ScenarioConfig::validate() const {
  if (scenario_id.empty()) fail("scenario_id", "must be non-empty");
  if (max_sim_time <= 0.0) fail("max_sim_time", "must be > 0");

  try {
    cloth.validate();
  } catch (const std::invalid_argument& e) {
    throw ScenarioError(e.what());
  }

  if (features.empty()) fail("features", "must be non-empty");
  try {
    sim::validate_attachments(attachments(), cloth);
  } catch (const std::invalid_argument& e) {
    throw ScenarioError(e.what());
  }
  for (const FeatureSpec& f : features) {
    const std::string path = "features[id=" + std::to_string(f.id) + "]";
    if (f.grid_row < 0 || f.grid_row >= cloth.rows) {
      fail(path + ".grid_row", "outside the particle grid");
    }
    if (f.grid_col < 0 || f.grid_col >= cloth.cols) {
      fail(path + ".grid_col", "outside the particle grid");
    }
    if (f.target.size() != f.dims) {
      fail(path + ".target", "must have dims entries");
    }
    if (!cloth.table_extent.contains(f.target[0], f.target[1])) {
      fail(path + ".target", "lies outside the table extent");
    }
  }
  std::set<int> ids;
  for (const FeatureSpec& f : features) ids.insert(f.id);
  std::set<int> paired;
  for (const auto& [a, b] : feature_pairs) {
    for (int id : {a, b}) {
      if (!ids.count(id)) {
        fail("feature_pairs", "unknown feature id " + std::to_string(id));
      }
      if (!paired.insert(id).second) {
        fail("feature_pairs", "feature " + std::to_string(id) + " paired twice");
      }
    }
  }

  if (sensor.noise_stddev < 0.0) fail("sensor.noise_stddev", "must be >= 0");
  if (sensor.rate_hz <= 0.0) fail("sensor.rate_hz", "must be > 0");

  const kin::ArmModel arm_m = arm_model();
  try {
    arm_m.validate();
  } catch (const std::invalid_argument& e) {
    throw ScenarioError(e.what());
  }
  if (arm.home_joints.size() != arm_m.dof()) {
    fail("arm.home_joints", "must list one angle per joint");
  }
  for (int i = 0; i < arm_m.dof(); ++i) {
    if (arm.home_joints[i] < arm_m.joints[i].limit_lo ||
        arm.home_joints[i] > arm_m.joints[i].limit_hi) {
      fail("arm.home_joints[" + std::to_string(i) + "]",
           "outside the joint limits");
    }
  }

  const Rect keep_out = cloth.table_extent.inflated(params.safe_distance);
  if (keep_out.contains(base_start.x, base_start.y)) {
    fail("base.start", "inside the table footprint inflated by safe_distance");
  }

  if (params.retry_count < 1) fail("bt.retry_count", "must be >= 1");
  if (params.flatten_tolerance <= 0.0) fail("bt.flatten_tolerance", "must be > 0");
  if (params.check_window <= 0.0) fail("bt.check_window", "must be > 0");
  if (params.check_threshold <= 0.0) fail("bt.check_threshold", "must be > 0");
  if (params.grasp_tolerance <= 0.0) fail("bt.grasp_tolerance", "must be > 0");
  if (params.grasp_clearance < 0.0 ||
      params.grasp_clearance >= params.grasp_tolerance) {
    fail("bt.grasp_clearance", "must be in [0, grasp_tolerance)");
  }
  if (params.gain <= 0.0) fail("controller.gain", "must be > 0");
  if (params.alpha <= 0.0 || params.alpha > 1.0) {
    fail("controller.alpha", "must be in (0, 1]");
  }
  if (params.convergence_threshold <= 0.0) {
    fail("controller.convergence_threshold", "must be > 0");
  }
  if (params.max_duration <= 0.0) fail("controller.max_duration", "must be > 0");
  if (params.ee_speed_cap <= 0.0) fail("controller.ee_speed_cap", "must be > 0");
  if (params.base_speed <= 0.0) fail("base.speed", "must be > 0");
  if (params.safe_distance < 0.0) fail("base.safe_distance", "must be >= 0");

  static const std::set<std::string> kinds = {
      "none", "folded_edge", "shifted", "rotated", "corner_tuck", "scripted"};
  if (!kinds.count(recipe.kind)) fail("recipe.kind", "unknown recipe");
  if (recipe.kind == "rotated" &&
      (recipe.angle <= -M_PI || recipe.angle >= M_PI)) {
    fail("recipe.angle", "must be in (-pi, pi)");
  }
  if (recipe.kind == "folded_edge") {
    if (recipe.fraction <= 0.0 || recipe.fraction >= 0.5) {
      fail("recipe.fraction", "must be in (0, 0.5)");
    }
    if (recipe.side != "left" && recipe.side != "right") {
      fail("recipe.side", "must be left or right");
    }
  }
  if (recipe.kind == "corner_tuck" && !ids.count(recipe.feature_id)) {
    fail("recipe.feature_id", "unknown feature id");
  }
  for (const auto& d : recipe.displacements) {
    if (d.row < 0 || d.row >= cloth.rows || d.col < 0 || d.col >= cloth.cols) {
      fail("recipe.displacements", "grid index outside the particle grid");
    }
  }
  if (recipe.settle_time <= 0.0) fail("recipe.settle_time", "must be > 0");
}

kin::ArmModel ScenarioConfig::arm_model() const {
  kin::ArmModel m = arm.use_default ? kin::ArmModel::default_six_dof() : arm.model;
  m.ee_velocity_limit = arm.ee_velocity_limit;
  return m;
}

Eigen::VectorXd ScenarioConfig::stacked_targets() const {
  std::vector<FeatureSpec> sorted = features;
  std::sort(sorted.begin(), sorted.end(),
            [](const FeatureSpec& a, const FeatureSpec& b) { return a.id < b.id; });
  const int d = sorted.front().dims;
  Eigen::VectorXd out(static_cast<int>(sorted.size()) * d);
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    out.segment(static_cast<int>(i) * d, d) = sorted[i].target;
  }
  return out;
}

std::vector<sim::FeatureAttachment> ScenarioConfig::attachments() const {
  std::vector<sim::FeatureAttachment> out;
  for (const FeatureSpec& f : features) {
    out.push_back({f.id, f.grid_row * cloth.cols + f.grid_col, f.dims});
  }
  return out;
}

ScenarioConfig scenario_from_json_text(const std::string& text,
                                       const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioError(origin + ": " + e.what());
  }

  ScenarioConfig c;
  c.scenario_id = str_field(j, "", "scenario_id");
  c.seed = member(j, "", "seed").get<std::uint64_t>();
  c.max_sim_time = num_field(j, "", "max_sim_time");

  const json& cloth = member(j, "", "cloth");
  c.cloth.width = num_field(cloth, "cloth", "width");
  c.cloth.height = num_field(cloth, "cloth", "height");
  c.cloth.rows = int_field(cloth, "cloth", "rows");
  c.cloth.cols = int_field(cloth, "cloth", "cols");
  c.cloth.particle_mass = num_field(cloth, "cloth", "particle_mass");
  c.cloth.stiffness_structural = num_field(cloth, "cloth", "stiffness_structural");
  c.cloth.stiffness_shear = num_field(cloth, "cloth", "stiffness_shear");
  c.cloth.stiffness_bend = num_field(cloth, "cloth", "stiffness_bend");
  c.cloth.damping = num_field(cloth, "cloth", "damping");
  c.cloth.table_height = num_field(cloth, "cloth", "table_height");
  const json& extent = member(cloth, "cloth", "table_extent");
  c.cloth.table_extent.min_x = num_field(extent, "cloth.table_extent", "min_x");
  c.cloth.table_extent.min_y = num_field(extent, "cloth.table_extent", "min_y");
  c.cloth.table_extent.max_x = num_field(extent, "cloth.table_extent", "max_x");
  c.cloth.table_extent.max_y = num_field(extent, "cloth.table_extent", "max_y");
  c.cloth.friction_static_threshold =
      num_field(cloth, "cloth", "friction_static_threshold");
  c.cloth.friction_kinetic_coeff =
      num_field(cloth, "cloth", "friction_kinetic_coeff");
  c.cloth.gravity = num_or(cloth, "gravity", 9.81);
  c.cloth.dt = num_field(cloth, "cloth", "dt");
  c.cloth.substeps_per_control_tick =
      int_field(cloth, "cloth", "substeps_per_control_tick");
  const Eigen::VectorXd origin_xy = vec_field(cloth, "cloth", "origin", 2);
  c.cloth_origin = {origin_xy[0], origin_xy[1]};

  const json& features = member(j, "", "features");
  if (!features.is_array()) fail("features", "expected an array");
  for (std::size_t i = 0; i < features.size(); ++i) {
    const std::string path = "features[" + std::to_string(i) + "]";
    const json& f = features[i];
    FeatureSpec spec;
    spec.id = int_field(f, path, "id");
    spec.grid_row = int_field(f, path, "grid_row");
    spec.grid_col = int_field(f, path, "grid_col");
    spec.dims = int_or(f, "dims", 2);
    spec.target = vec_field(f, path, "target", spec.dims);
    c.features.push_back(std::move(spec));
  }

  if (j.contains("feature_pairs")) {
    for (const json& p : j.at("feature_pairs")) {
      if (!p.is_array() || p.size() != 2) {
        fail("feature_pairs", "each pair must list two feature ids");
      }
      c.feature_pairs.emplace_back(p[0].get<int>(), p[1].get<int>());
    }
  }

  const json& sensor = member(j, "", "sensor");
  c.sensor.noise_stddev = num_field(sensor, "sensor", "noise_stddev");
  c.sensor.rate_hz = num_field(sensor, "sensor", "rate_hz");
  c.sensor.seed = c.seed;

  const json& arm = member(j, "", "arm");
  const std::string preset = arm.contains("preset")
                                 ? arm.at("preset").get<std::string>()
                                 : std::string("custom");
  if (preset == "default_six_dof") {
    c.arm.use_default = true;
  } else if (arm.contains("joints")) {
    c.arm.use_default = false;
    const json& joints = arm.at("joints");
    for (std::size_t i = 0; i < joints.size(); ++i) {
      const std::string path = "arm.joints[" + std::to_string(i) + "]";
      const json& jj = joints[i];
      kin::ArmJoint joint;
      const Eigen::VectorXd axis = vec_field(jj, path, "axis", 3);
      const Eigen::VectorXd offset = vec_field(jj, path, "offset", 3);
      const Eigen::VectorXd limits = vec_field(jj, path, "limits", 2);
      joint.axis = axis;
      joint.offset = offset;
      joint.limit_lo = limits[0];
      joint.limit_hi = limits[1];
      c.arm.model.joints.push_back(joint);
    }
    const Eigen::VectorXd ee = vec_field(arm, "arm", "ee_offset", 3);
    c.arm.model.ee_offset = ee;
  } else {
    fail("arm", "needs preset \"default_six_dof\" or an explicit joints list");
  }
  c.arm.home_joints = vec_field(arm, "arm", "home_joints");
  c.arm.ee_velocity_limit = num_or(arm, "ee_velocity_limit", 0.1);

  const json& base = member(j, "", "base");
  const Eigen::VectorXd start = vec_field(base, "base", "start", 3);
  c.base_start.x = start[0];
  c.base_start.y = start[1];
  c.base_start.rz = start[2];
  c.base_start.z = num_or(base, "height", 0.30);
  c.params.base_speed = num_field(base, "base", "speed");
  c.params.safe_distance = num_field(base, "base", "safe_distance");
  c.params.corner_margin = num_or(base, "corner_margin", 0.05);

  const json& ctrl = member(j, "", "controller");
  c.params.gain = num_field(ctrl, "controller", "gain");
  c.params.alpha = num_field(ctrl, "controller", "alpha");
  c.params.min_dx_norm = num_or(ctrl, "min_dx_norm", 1e-5);
  c.params.convergence_threshold =
      num_field(ctrl, "controller", "convergence_threshold");
  c.params.convergence_hold = num_or(ctrl, "convergence_hold", 1.0);
  c.params.max_duration = num_field(ctrl, "controller", "max_duration");
  c.params.ee_speed_cap = num_field(ctrl, "controller", "ee_speed_cap");
  const std::string mode =
      ctrl.contains("task_mode") ? ctrl.at("task_mode").get<std::string>()
                                 : std::string("fixed_targets");
  if (mode == "fixed_targets") {
    c.params.hold_complement = false;
  } else if (mode == "hold_complement") {
    c.params.hold_complement = true;
  } else {
    fail("controller.task_mode", "must be fixed_targets or hold_complement");
  }

  const json& bt = member(j, "", "bt");
  c.params.retry_count = int_field(bt, "bt", "retry_count");
  c.params.grasp_tolerance = num_field(bt, "bt", "grasp_tolerance");
  c.params.grasp_clearance = num_or(bt, "grasp_clearance", 0.006);
  c.params.approach_speed = num_or(bt, "approach_speed", 0.08);
  c.params.approach_tolerance = num_or(bt, "approach_tolerance", 0.002);
  c.params.check_window = num_field(bt, "bt", "check_window");
  c.params.check_speed = num_or(bt, "check_speed", 0.02);
  c.params.check_threshold = num_field(bt, "bt", "check_threshold");
  c.params.vertical_offset_bound = num_or(bt, "vertical_offset_bound", 0.01);
  c.params.flatten_tolerance = num_field(bt, "bt", "flatten_tolerance");
  c.params.home_joint_speed = num_or(bt, "home_joint_speed", 1.0);
  c.params.home_tolerance = num_or(bt, "home_tolerance", 1e-3);
  c.params.grasp_height_error = num_or(bt, "grasp_height_error", 0.0);
  c.params.grasp_height_error_attempts =
      int_or(bt, "grasp_height_error_attempts", 0);
  c.params.seed = c.seed;

  const json& recipe = member(j, "", "recipe");
  c.recipe.kind = str_field(recipe, "recipe", "kind");
  c.recipe.fraction = num_or(recipe, "fraction", 0.0);
  c.recipe.side = recipe.contains("side") ? recipe.at("side").get<std::string>()
                                          : std::string("left");
  c.recipe.lift = num_or(recipe, "lift", 0.003);
  c.recipe.dx = num_or(recipe, "dx", 0.0);
  c.recipe.dy = num_or(recipe, "dy", 0.0);
  if (recipe.contains("pivot")) {
    const Eigen::VectorXd pivot = vec_field(recipe, "recipe", "pivot", 2);
    c.recipe.pivot = {pivot[0], pivot[1]};
  } else {
    c.recipe.pivot = {c.cloth_origin.x() + 0.5 * c.cloth.width,
                      c.cloth_origin.y() + 0.5 * c.cloth.height};
  }
  c.recipe.angle = num_or(recipe, "angle", 0.0);
  c.recipe.feature_id = int_or(recipe, "feature_id", 0);
  c.recipe.depth = num_or(recipe, "depth", 0.0);
  c.recipe.settle_time = num_or(recipe, "settle_time", 3.0);
  if (recipe.contains("displacements")) {
    for (const json& d : recipe.at("displacements")) {
      RecipeSpec::Displacement disp;
      disp.row = int_field(d, "recipe.displacements", "row");
      disp.col = int_field(d, "recipe.displacements", "col");
      const Eigen::VectorXd delta =
          vec_field(d, "recipe.displacements", "delta", 3);
      disp.delta = delta;
      c.recipe.displacements.push_back(disp);
    }
  }

  c.validate();
  return c;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ScenarioError("cannot open scenario file " + path.string());
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return scenario_from_json_text(buf.str(), path.string());
}

std::string serialize_scenario(const ScenarioConfig& c) {
  json j;
  j["scenario_id"] = c.scenario_id;
  j["seed"] = c.seed;
  j["max_sim_time"] = c.max_sim_time;

  json cloth;
  cloth["width"] = c.cloth.width;
  cloth["height"] = c.cloth.height;
  cloth["rows"] = c.cloth.rows;
  cloth["cols"] = c.cloth.cols;
  cloth["particle_mass"] = c.cloth.particle_mass;
  cloth["stiffness_structural"] = c.cloth.stiffness_structural;
  cloth["stiffness_shear"] = c.cloth.stiffness_shear;
  cloth["stiffness_bend"] = c.cloth.stiffness_bend;
  cloth["damping"] = c.cloth.damping;
  cloth["table_height"] = c.cloth.table_height;
  cloth["table_extent"] = {{"min_x", c.cloth.table_extent.min_x},
                           {"min_y", c.cloth.table_extent.min_y},
                           {"max_x", c.cloth.table_extent.max_x},
                           {"max_y", c.cloth.table_extent.max_y}};
  cloth["friction_static_threshold"] = c.cloth.friction_static_threshold;
  cloth["friction_kinetic_coeff"] = c.cloth.friction_kinetic_coeff;
  cloth["gravity"] = c.cloth.gravity;
  cloth["dt"] = c.cloth.dt;
  cloth["substeps_per_control_tick"] = c.cloth.substeps_per_control_tick;
  cloth["origin"] = {c.cloth_origin.x(), c.cloth_origin.y()};
  j["cloth"] = cloth;

  j["features"] = json::array();
  for (const FeatureSpec& f : c.features) {
    json jf;
    jf["id"] = f.id;
    jf["grid_row"] = f.grid_row;
    jf["grid_col"] = f.grid_col;
    jf["dims"] = f.dims;
    jf["target"] = vec_to_json(f.target);
    j["features"].push_back(jf);
  }
  j["feature_pairs"] = json::array();
  for (const auto& [a, b] : c.feature_pairs) {
    j["feature_pairs"].push_back({a, b});
  }

  j["sensor"] = {{"noise_stddev", c.sensor.noise_stddev},
                 {"rate_hz", c.sensor.rate_hz}};

  json arm;
  if (c.arm.use_default) {
    arm["preset"] = "default_six_dof";
  } else {
    arm["joints"] = json::array();
    for (const kin::ArmJoint& joint : c.arm.model.joints) {
      json jj;
      jj["axis"] = {joint.axis.x(), joint.axis.y(), joint.axis.z()};
      jj["offset"] = {joint.offset.x(), joint.offset.y(), joint.offset.z()};
      jj["limits"] = {joint.limit_lo, joint.limit_hi};
      arm["joints"].push_back(jj);
    }
    arm["ee_offset"] = {c.arm.model.ee_offset.x(), c.arm.model.ee_offset.y(),
                        c.arm.model.ee_offset.z()};
  }
  arm["home_joints"] = vec_to_json(c.arm.home_joints);
  arm["ee_velocity_limit"] = c.arm.ee_velocity_limit;
  j["arm"] = arm;

  j["base"] = {{"start", {c.base_start.x, c.base_start.y, c.base_start.rz}},
               {"height", c.base_start.z},
               {"speed", c.params.base_speed},
               {"safe_distance", c.params.safe_distance},
               {"corner_margin", c.params.corner_margin}};

  j["controller"] = {
      {"gain", c.params.gain},
      {"alpha", c.params.alpha},
      {"min_dx_norm", c.params.min_dx_norm},
      {"convergence_threshold", c.params.convergence_threshold},
      {"convergence_hold", c.params.convergence_hold},
      {"max_duration", c.params.max_duration},
      {"ee_speed_cap", c.params.ee_speed_cap},
      {"task_mode",
       c.params.hold_complement ? "hold_complement" : "fixed_targets"}};

  j["bt"] = {{"retry_count", c.params.retry_count},
             {"grasp_tolerance", c.params.grasp_tolerance},
             {"grasp_clearance", c.params.grasp_clearance},
             {"approach_speed", c.params.approach_speed},
             {"approach_tolerance", c.params.approach_tolerance},
             {"check_window", c.params.check_window},
             {"check_speed", c.params.check_speed},
             {"check_threshold", c.params.check_threshold},
             {"vertical_offset_bound", c.params.vertical_offset_bound},
             {"flatten_tolerance", c.params.flatten_tolerance},
             {"home_joint_speed", c.params.home_joint_speed},
             {"home_tolerance", c.params.home_tolerance},
             {"grasp_height_error", c.params.grasp_height_error},
             {"grasp_height_error_attempts", c.params.grasp_height_error_attempts}};

  json recipe;
  recipe["kind"] = c.recipe.kind;
  recipe["fraction"] = c.recipe.fraction;
  recipe["side"] = c.recipe.side;
  recipe["lift"] = c.recipe.lift;
  recipe["dx"] = c.recipe.dx;
  recipe["dy"] = c.recipe.dy;
  recipe["pivot"] = {c.recipe.pivot.x(), c.recipe.pivot.y()};
  recipe["angle"] = c.recipe.angle;
  recipe["feature_id"] = c.recipe.feature_id;
  recipe["depth"] = c.recipe.depth;
  recipe["settle_time"] = c.recipe.settle_time;
  recipe["displacements"] = json::array();
  for (const auto& d : c.recipe.displacements) {
    recipe["displacements"].push_back(
        {{"row", d.row},
         {"col", d.col},
         {"delta", {d.delta.x(), d.delta.y(), d.delta.z()}}});
  }
  j["recipe"] = recipe;

  return j.dump(2) + "\n";
}

sim::ClothState prepare_cloth(const ScenarioConfig& config,
                              const sim::ClothModel& model) {
  const sim::ClothConfig& cc = config.cloth;
  sim::ClothState state = model.make_rest_state(config.cloth_origin);
  const RecipeSpec& r = config.recipe;

  if (r.kind == "shifted") {
    for (auto& p : state.positions) {
      p.x() += r.dx;
      p.y() += r.dy;
    }
  } else if (r.kind == "rotated") {
    const double c_ = std::cos(r.angle);
    const double s_ = std::sin(r.angle);
    for (auto& p : state.positions) {
      const double x = p.x() - r.pivot.x();
      const double y = p.y() - r.pivot.y();
      p.x() = r.pivot.x() + c_ * x - s_ * y;
      p.y() = r.pivot.y() + s_ * x + c_ * y;
    }
  } else if (r.kind == "folded_edge") {
    const double fold_len = r.fraction * cc.width;
    const bool left = r.side == "left";
    const double crease = left ? config.cloth_origin.x() + fold_len
                               : config.cloth_origin.x() + cc.width - fold_len;
    for (auto& p : state.positions) {
      const bool in_flap = left ? p.x() < crease : p.x() > crease;
      if (in_flap) {
        p.x() = 2.0 * crease - p.x();
        p.z() += r.lift;
      }
    }
  } else if (r.kind == "corner_tuck") {
    const auto atts = config.attachments();
    const auto it =
        std::find_if(atts.begin(), atts.end(), [&](const auto& a) {
          return a.feature_id == r.feature_id;
        });
    const Eigen::Vector3d corner = state.positions[it->particle_index];
    const Eigen::Vector3d center(
        config.cloth_origin.x() + 0.5 * cc.width,
        config.cloth_origin.y() + 0.5 * cc.height, cc.table_height);
    Eigen::Vector2d inward = (center - corner).head<2>();
    inward.normalize();
    const double radius = 2.5 * r.depth;
    for (auto& p : state.positions) {
      const double dist = (p.head<2>() - corner.head<2>()).norm();
      if (dist < radius) {
        const double weight = 1.0 - dist / radius;
        p.head<2>() += inward * (r.depth * weight);
        p.z() += r.lift * weight;
      }
    }
  } else if (r.kind == "scripted") {
    for (const auto& d : r.displacements) {
      state.positions[d.row * cc.cols + d.col] += d.delta;
    }
  }

  // Let the recipe relax to rest; the run must start from equilibrium.
  const Eigen::Vector3d parked(0.0, 0.0, 10.0);  // irrelevant without a grasp
  const long budget = static_cast<long>(std::ceil(r.settle_time / cc.dt));
  for (long i = 0; i < budget; ++i) {
    model.step(state, parked, cc.dt);
    if (i % 50 == 49 && model.max_speed(state) < 1e-4) break;
  }
  if (model.max_speed(state) >= 1e-4) {
    throw ScenarioError(
        "recipe: cloth still moving after settle_time; max particle speed " +
        std::to_string(model.max_speed(state)));
  }
  for (const auto& p : state.positions) {
    if (!cc.table_extent.contains(p.x(), p.y())) {
      throw ScenarioError("recipe: cloth leaves the table extent");
    }
  }
  return state;
}

bt::WorldInit make_world_init(const ScenarioConfig& config) {
  config.validate();
  bt::WorldInit init;
  init.cloth = config.cloth;
  sim::ClothModel model(config.cloth);
  init.initial_cloth = prepare_cloth(config, model);
  init.attachments = config.attachments();
  init.sensor = config.sensor;
  init.arm = config.arm_model();
  init.home_joints = config.arm.home_joints;
  init.base_start = config.base_start;
  init.targets = config.stacked_targets();
  init.feature_pairs = config.feature_pairs;
  init.params = config.params;
  return init;
}

}  // namespace clothspread::harness
