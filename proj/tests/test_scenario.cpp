#include <doctest.h>

#include <json.hpp>

#include <filesystem>
#include <string>

#include "clothspread/scenario.hpp"
#include "support/mini_scenario.hpp"

using namespace clothspread;
using harness::ScenarioConfig;
using harness::ScenarioError;

namespace {

nlohmann::json mini_json() {
  return nlohmann::json::parse(clothspread::testing::mini_scenario_text());
}

ScenarioConfig parse(const nlohmann::json& j) {
  return harness::scenario_from_json_text(j.dump());
}

}  // namespace

TEST_CASE("the mini scenario parses with the paper's dimensions") {
  const ScenarioConfig c = parse(mini_json());
  CHECK(c.features.size() == 4);           // k = 4
  CHECK(c.features.front().dims == 2);     // d = 2
  CHECK(c.stacked_targets().size() == 8);  // m = 8
  CHECK(c.params.gain == 3.5);
  CHECK(c.params.alpha == 0.1);
}

TEST_CASE("bundled scenario files load and validate") {
  const std::filesystem::path dir = CLOTHSPREAD_SCENARIO_DIR;
  for (const char* name : {"condition1.json", "condition2.json", "full_task.json"}) {
    const ScenarioConfig c = harness::load_scenario(dir / name);
    CHECK(c.features.size() == 4);
    CHECK(c.stacked_targets().size() == 8);
    CHECK(c.cloth.width == 0.72);
    CHECK(c.cloth.height == 0.35);
    CHECK(c.cloth.table_height == 0.28);
  }
}

TEST_CASE("validation errors name the offending field") {
  SUBCASE("target off the table") {
    nlohmann::json j = mini_json();
    j["features"][0]["target"] = {5.0, 5.0};
    CHECK_THROWS_WITH_AS(parse(j), doctest::Contains("target"), ScenarioError);
  }
  SUBCASE("missing field") {
    nlohmann::json j = mini_json();
    j["cloth"].erase("dt");
    CHECK_THROWS_WITH_AS(parse(j), doctest::Contains("cloth.dt"), ScenarioError);
  }
  SUBCASE("bad grid dimension") {
    nlohmann::json j = mini_json();
    j["cloth"]["rows"] = 1;
    CHECK_THROWS_WITH_AS(parse(j), doctest::Contains("rows"), ScenarioError);
  }
  SUBCASE("feature ids must be contiguous") {
    nlohmann::json j = mini_json();
    j["features"][3]["id"] = 9;
    CHECK_THROWS_AS(parse(j), ScenarioError);
  }
  SUBCASE("home joints must respect limits") {
    nlohmann::json j = mini_json();
    j["arm"]["home_joints"] = {0.0, 9.0, 0.0, 0.0, 0.0, 0.0};
    CHECK_THROWS_WITH_AS(parse(j), doctest::Contains("home_joints"),
                         ScenarioError);
  }
  SUBCASE("base start inside the keep-out zone") {
    nlohmann::json j = mini_json();
    j["base"]["start"] = {0.5, 0.3, 0.0};
    CHECK_THROWS_WITH_AS(parse(j), doctest::Contains("base.start"),
                         ScenarioError);
  }
  SUBCASE("alpha outside (0, 1]") {
    nlohmann::json j = mini_json();
    j["controller"]["alpha"] = 1.5;
    CHECK_THROWS_WITH_AS(parse(j), doctest::Contains("alpha"), ScenarioError);
  }
  SUBCASE("unknown recipe kind") {
    nlohmann::json j = mini_json();
    j["recipe"]["kind"] = "origami";
    CHECK_THROWS_WITH_AS(parse(j), doctest::Contains("recipe"), ScenarioError);
  }
}

TEST_CASE("load -> serialize -> load is the identity") {
  const ScenarioConfig a = parse(mini_json());
  const std::string text = harness::serialize_scenario(a);
  const ScenarioConfig b = harness::scenario_from_json_text(text);
  CHECK(harness::serialize_scenario(b) == text);
  CHECK(b.scenario_id == a.scenario_id);
  CHECK(b.seed == a.seed);
  CHECK(b.stacked_targets() == a.stacked_targets());
}

TEST_CASE("recipes leave the cloth settled") {
  const ScenarioConfig c = parse(mini_json());
  const sim::ClothModel model(c.cloth);
  const sim::ClothState state = harness::prepare_cloth(c, model);
  CHECK(model.max_speed(state) < 1e-4);

  // the tucked corner actually moved away from its target
  const auto atts = c.attachments();
  const Eigen::Vector3d corner = state.positions[atts[1].particle_index];
  const Eigen::VectorXd target = c.features[1].target;
  const double off = std::hypot(corner.x() - target[0], corner.y() - target[1]);
  CHECK(off > c.params.flatten_tolerance);
}

TEST_CASE("folded_edge recipe reflects the flap and settles") {
  nlohmann::json j = mini_json();
  j["recipe"] = {{"kind", "folded_edge"}, {"fraction", 0.22},
                 {"side", "left"},        {"lift", 0.003},
                 {"settle_time", 3.0}};
  const ScenarioConfig c = parse(j);
  const sim::ClothModel model(c.cloth);
  const sim::ClothState state = harness::prepare_cloth(c, model);
  CHECK(model.max_speed(state) < 1e-4);

  // left-edge corners now sit well inside the cloth span
  const auto atts = c.attachments();
  const Eigen::Vector3d f3 = state.positions[atts[2].particle_index];
  CHECK(f3.x() > 0.1);
}
