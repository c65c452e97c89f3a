#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "clothspread/cloth_sim.hpp"

using namespace clothspread;
using sim::ClothConfig;
using sim::ClothModel;
using sim::ClothState;
using sim::FeatureAttachment;
using sim::SensorModel;

namespace {

ClothConfig small_config() {
  ClothConfig cfg;
  cfg.rows = 7;
  cfg.cols = 13;
  cfg.table_extent = Rect{-0.5, -0.5, 1.5, 1.0};
  return cfg;
}

std::vector<FeatureAttachment> corner_attachments(const ClothConfig& cfg) {
  return {
      {1, (cfg.rows - 1) * cfg.cols + (cfg.cols - 1), 2},
      {2, (cfg.rows - 1) * cfg.cols + 0, 2},
      {3, 0, 2},
      {4, cfg.cols - 1, 2},
  };
}

// Drag the pinned ee along a straight line over the given duration.
void drag_ee(const ClothModel& model, ClothState& state,
             const Eigen::Vector3d& from, const Eigen::Vector3d& to,
             double duration) {
  const double dt = model.config().dt;
  const int steps = static_cast<int>(std::round(duration / dt));
  for (int i = 1; i <= steps; ++i) {
    const double a = static_cast<double>(i) / steps;
    model.step(state, (1.0 - a) * from + a * to, dt);
  }
}

void settle(const ClothModel& model, ClothState& state,
            const Eigen::Vector3d& ee, double max_time = 3.0) {
  const double dt = model.config().dt;
  const long steps = static_cast<long>(max_time / dt);
  for (long i = 0; i < steps; ++i) {
    model.step(state, ee, dt);
    if (model.max_speed(state) < 1e-5) break;
  }
}

// Midrank-based Spearman correlation.
double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  auto midranks = [](const std::vector<double>& v) {
    const int n = static_cast<int>(v.size());
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](int i, int j) { return v[i] < v[j]; });
    std::vector<double> ranks(n);
    int i = 0;
    while (i < n) {
      int j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double rank = 0.5 * (i + j) + 1.0;
      for (int k = i; k <= j; ++k) ranks[idx[k]] = rank;
      i = j + 1;
    }
    return ranks;
  };
  const std::vector<double> ra = midranks(a), rb = midranks(b);
  const int n = static_cast<int>(a.size());
  double ma = 0, mb = 0;
  for (int i = 0; i < n; ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double num = 0, da = 0, db = 0;
  for (int i = 0; i < n; ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  return num / std::sqrt(da * db);
}

}  // namespace

TEST_CASE("config validation names the offending field") {
  ClothConfig cfg = small_config();
  cfg.rows = 1;
  CHECK_THROWS_WITH_AS(ClothModel{cfg}, doctest::Contains("rows"),
                       std::invalid_argument);
  cfg = small_config();
  cfg.dt = 0.0;
  CHECK_THROWS_WITH_AS(ClothModel{cfg}, doctest::Contains("dt"),
                       std::invalid_argument);
}

TEST_CASE("cloth at rest on the table stays put") {
  const ClothConfig cfg = small_config();
  const ClothModel model(cfg);
  ClothState state = model.make_rest_state({0.0, 0.0});
  const ClothState before = state;

  for (int i = 0; i < 200; ++i) {
    model.step(state, {10.0, 10.0, 10.0}, cfg.dt);
  }
  for (int i = 0; i < cfg.particle_count(); ++i) {
    CHECK((state.positions[i] - before.positions[i]).norm() < 1e-9);
  }
}

TEST_CASE("pinned particle tracks the end-effector exactly") {
  const ClothConfig cfg = small_config();
  const ClothModel model(cfg);
  ClothState state = model.make_rest_state({0.0, 0.0});

  const Eigen::Vector3d corner = state.positions[0];
  REQUIRE(model.attach_grasp(state, corner, 0.01));
  CHECK(state.grasp->particle_index == 0);

  SUBCASE("+0.01 m in x moves the grasped particle by exactly that") {
    const Eigen::Vector3d ee = corner + Eigen::Vector3d(0.01, 0.0, 0.0);
    model.step(state, ee, cfg.dt);
    CHECK(state.positions[0].x() == doctest::Approx(corner.x() + 0.01).epsilon(1e-12));
    // the pin itself is exact
    CHECK((state.positions[0] - (ee + state.grasp->world_offset)).norm() == 0.0);
  }

  SUBCASE("pin holds through a dragged trajectory") {
    Eigen::Vector3d ee = corner;
    for (int i = 0; i < 100; ++i) {
      ee += Eigen::Vector3d(2e-4, 1e-4, 0.0);
      model.step(state, ee, cfg.dt);
      REQUIRE((state.positions[0] - (ee + state.grasp->world_offset)).norm() == 0.0);
    }
  }
}

TEST_CASE("attach_grasp honors tolerance and rejects double grasps") {
  const ClothConfig cfg = small_config();
  const ClothModel model(cfg);
  ClothState state = model.make_rest_state({0.0, 0.0});

  SUBCASE("within tolerance") {
    const Eigen::Vector3d near = state.positions[5] + Eigen::Vector3d(0.001, 0, 0);
    CHECK(model.attach_grasp(state, near, 0.01));
    CHECK(state.grasp->particle_index == 5);
  }
  SUBCASE("out of tolerance") {
    const Eigen::Vector3d far = state.positions[5] + Eigen::Vector3d(0, 0, 0.05);
    CHECK_FALSE(model.attach_grasp(state, far, 0.01));
    CHECK_FALSE(state.grasp.has_value());
  }
  SUBCASE("double grasp is a precondition error") {
    REQUIRE(model.attach_grasp(state, state.positions[0], 0.01));
    CHECK_THROWS_AS(model.attach_grasp(state, state.positions[1], 0.01),
                    std::logic_error);
  }
}

TEST_CASE("release clears the grasp and is idempotent") {
  const ClothConfig cfg = small_config();
  const ClothModel model(cfg);
  ClothState state = model.make_rest_state({0.0, 0.0});

  REQUIRE(model.attach_grasp(state, state.positions[0], 0.01));
  model.release_grasp(state);
  CHECK_FALSE(state.grasp.has_value());

  const ClothState snapshot = state;
  model.release_grasp(state);
  CHECK_FALSE(state.grasp.has_value());
  for (int i = 0; i < cfg.particle_count(); ++i) {
    CHECK(state.positions[i] == snapshot.positions[i]);
  }
}

TEST_CASE("lifted cloth settles back onto the table after release") {
  const ClothConfig cfg = small_config();
  const ClothModel model(cfg);
  ClothState state = model.make_rest_state({0.0, 0.0});

  const Eigen::Vector3d corner = state.positions[0];
  REQUIRE(model.attach_grasp(state, corner, 0.01));
  drag_ee(model, state, corner, corner + Eigen::Vector3d(0, 0, 0.04), 0.8);
  CHECK(state.positions[0].z() > cfg.table_height + 0.03);

  model.release_grasp(state);
  settle(model, state, corner);
  CHECK(model.max_speed(state) < 1e-4);
  CHECK(state.positions[0].z() == doctest::Approx(cfg.table_height).epsilon(1e-9));
}

TEST_CASE("no particle over the table penetrates it") {
  const ClothConfig cfg = small_config();
  const ClothModel model(cfg);
  ClothState state = model.make_rest_state({0.0, 0.0});

  const Eigen::Vector3d corner = state.positions[0];
  REQUIRE(model.attach_grasp(state, corner, 0.01));
  drag_ee(model, state, corner, corner + Eigen::Vector3d(0.08, 0.05, 0.01), 1.5);

  for (int i = 0; i < cfg.particle_count(); ++i) {
    const auto& p = state.positions[i];
    if (cfg.table_extent.contains(p.x(), p.y())) {
      CHECK(p.z() >= cfg.table_height - 1e-6);
    }
  }
}

TEST_CASE("diminishing rigidity: farther particles move less") {
  const ClothConfig cfg = small_config();
  const ClothModel model(cfg);
  ClothState state = model.make_rest_state({0.0, 0.0});
  const ClothState before = state;

  // pull away from the cloth so the tension network engages
  const Eigen::Vector3d corner = state.positions[0];
  const Eigen::Vector3d target = corner + Eigen::Vector3d(-0.05, 0.0, 0.0);
  REQUIRE(model.attach_grasp(state, corner, 0.01));
  drag_ee(model, state, corner, target, 1.0);
  settle(model, state, target);

  const int nearest = 1;  // structural neighbor of the grasp corner
  const int farthest = cfg.particle_count() - 1;  // opposite corner
  const double d_near = (state.positions[nearest] - before.positions[nearest]).norm();
  const double d_far = (state.positions[farthest] - before.positions[farthest]).norm();
  CHECK(d_far < d_near);
}

TEST_CASE("diminishing rigidity: rank correlation on a 10x10 grid") {
  ClothConfig cfg;
  cfg.rows = 10;
  cfg.cols = 10;
  cfg.width = 0.36;
  cfg.height = 0.36;
  cfg.table_extent = Rect{-0.5, -0.5, 1.0, 1.0};
  const ClothModel model(cfg);
  ClothState state = model.make_rest_state({0.0, 0.0});
  const ClothState before = state;

  const Eigen::Vector3d corner = state.positions[0];
  REQUIRE(model.attach_grasp(state, corner, 0.01));
  const Eigen::Vector3d target = corner + Eigen::Vector3d(-0.02, -0.015, 0.0);
  drag_ee(model, state, corner, target, 0.5);
  settle(model, state, target);

  std::vector<double> displacement, distance;
  for (int i = 1; i < cfg.particle_count(); ++i) {
    displacement.push_back((state.positions[i] - before.positions[i]).norm());
    distance.push_back(static_cast<double>(model.grid_distance(0, i)));
  }
  CHECK(spearman(displacement, distance) < 0.0);
}

TEST_CASE("kinetic energy decays monotonically while settling") {
  const ClothConfig cfg = small_config();
  const ClothModel model(cfg);
  ClothState state = model.make_rest_state({0.0, 0.0});

  // deterministic velocity kick
  for (int i = 0; i < cfg.particle_count(); ++i) {
    state.velocities[i] = Eigen::Vector3d(0.05 * std::sin(0.3 * i),
                                          0.05 * std::cos(0.7 * i), 0.0);
  }

  double prev = model.kinetic_energy(state);
  for (int window = 0; window < 12; ++window) {
    for (int s = 0; s < cfg.substeps_per_control_tick; ++s) {
      model.step(state, {10.0, 10.0, 10.0}, cfg.dt);
    }
    const double now = model.kinetic_energy(state);
    if (prev < 1e-12) break;
    CHECK(now < prev);
    prev = now;
  }
}

TEST_CASE("trajectories are bit-identical for identical inputs") {
  const ClothConfig cfg = small_config();
  const ClothModel model(cfg);

  auto run = [&]() {
    ClothState state = model.make_rest_state({0.0, 0.0});
    const Eigen::Vector3d corner = state.positions[0];
    model.attach_grasp(state, corner, 0.01);
    Eigen::Vector3d ee = corner;
    for (int i = 0; i < 300; ++i) {
      ee += Eigen::Vector3d(1e-4, 5e-5, 0.0);
      model.step(state, ee, cfg.dt);
    }
    return state;
  };

  const ClothState a = run();
  const ClothState b = run();
  for (int i = 0; i < cfg.particle_count(); ++i) {
    CHECK(a.positions[i] == b.positions[i]);
    CHECK(a.velocities[i] == b.velocities[i]);
  }
}

TEST_CASE("feature measurement") {
  const ClothConfig cfg = small_config();
  const ClothModel model(cfg);
  const ClothState state = model.make_rest_state({0.1, 0.2});
  const auto attachments = corner_attachments(cfg);

  SUBCASE("zero noise reports exact planar coordinates") {
    SensorModel sensor{0.0, 42, 30.0};
    const auto s = model.measure_features(state, attachments, sensor, 0, 0.0);
    CHECK(s.values.size() == 8);  // k=4, d=2
    // feature 3 sits at the grid origin
    CHECK(s.values[4] == 0.1);
    CHECK(s.values[5] == 0.2);
  }

  SUBCASE("noise is deterministic per (seed, tick)") {
    SensorModel sensor{0.002, 42, 30.0};
    const auto a = model.measure_features(state, attachments, sensor, 7, 0.0);
    const auto b = model.measure_features(state, attachments, sensor, 7, 0.0);
    CHECK(a.values == b.values);

    const auto c = model.measure_features(state, attachments, sensor, 8, 0.0);
    CHECK(a.values != c.values);

    SensorModel other{0.002, 43, 30.0};
    const auto d = model.measure_features(state, attachments, other, 7, 0.0);
    CHECK(a.values != d.values);
  }

  SUBCASE("values stack in feature_id order regardless of list order") {
    auto shuffled = attachments;
    std::swap(shuffled[0], shuffled[3]);
    SensorModel sensor{0.0, 1, 30.0};
    const auto a = model.measure_features(state, attachments, sensor, 0, 0.0);
    const auto b = model.measure_features(state, shuffled, sensor, 0, 0.0);
    CHECK(a.values == b.values);
  }

  SUBCASE("attachment validation") {
    auto bad = attachments;
    bad[1].feature_id = 1;  // duplicate
    CHECK_THROWS_AS(sim::validate_attachments(bad, cfg), std::invalid_argument);
    bad = attachments;
    bad[0].particle_index = cfg.particle_count();
    CHECK_THROWS_AS(sim::validate_attachments(bad, cfg), std::invalid_argument);
  }
}

TEST_CASE("divergence raises an error naming the particle") {
  ClothConfig cfg = small_config();
  cfg.dt = 1.0;  // grossly unstable step
  ClothConfig safe = cfg;
  safe.dt = 1e-3;
  const ClothModel model(safe);

  ClothState state = model.make_rest_state({0.0, 0.0});
  // push one particle far off the grid so springs wind up
  state.positions[20] += Eigen::Vector3d(50.0, 0.0, 0.0);

  bool threw = false;
  try {
    for (int i = 0; i < 20000; ++i) {
      model.step(state, {10.0, 10.0, 10.0}, 1.0);
    }
  } catch (const sim::SimulationDivergedError& e) {
    threw = true;
    CHECK(e.particle() >= 0);
    CHECK(std::string(e.what()).find("particle") != std::string::npos);
  }
  CHECK(threw);
}
