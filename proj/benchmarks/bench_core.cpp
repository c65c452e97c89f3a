#include <benchmark/benchmark.h>

#include <Eigen/Dense>

#include "clothspread/cloth_sim.hpp"
#include "clothspread/deformation_control.hpp"
#include "clothspread/kinematics.hpp"
#include "clothspread/rng.hpp"

using namespace clothspread;

namespace {

sim::ClothConfig bench_cloth_config(int rows, int cols) {
  sim::ClothConfig cfg;
  cfg.rows = rows;
  cfg.cols = cols;
  cfg.table_extent = Rect{-0.5, -0.5, 1.5, 1.5};
  return cfg;
}

Eigen::MatrixXd random_matrix(int r, int c, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.next_uniform(-1, 1);
  return m;
}

void BM_ClothSubstep(benchmark::State& state) {
  const sim::ClothConfig cfg =
      bench_cloth_config(static_cast<int>(state.range(0)),
                         static_cast<int>(state.range(1)));
  const sim::ClothModel model(cfg);
  sim::ClothState cloth = model.make_rest_state({0.0, 0.0});
  model.attach_grasp(cloth, cloth.positions[0], 0.01);
  Eigen::Vector3d ee = cloth.positions[0];
  for (auto _ : state) {
    ee.x() += 1e-6;
    model.step(cloth, ee, cfg.dt);
    benchmark::DoNotOptimize(cloth.positions.data());
  }
  state.SetItemsProcessed(state.iterations() * model.springs().size());
}
BENCHMARK(BM_ClothSubstep)->Args({9, 19})->Args({20, 40});

void BM_ControlTick(benchmark::State& state) {
  const sim::ClothConfig cfg = bench_cloth_config(9, 19);
  const sim::ClothModel model(cfg);
  sim::ClothState cloth = model.make_rest_state({0.0, 0.0});
  model.attach_grasp(cloth, cloth.positions[0], 0.01);
  Eigen::Vector3d ee = cloth.positions[0];
  for (auto _ : state) {
    ee.x() += 1e-5;
    for (int s = 0; s < cfg.substeps_per_control_tick; ++s) {
      model.step(cloth, ee, cfg.dt);
    }
    benchmark::DoNotOptimize(cloth.positions.data());
  }
}
BENCHMARK(BM_ControlTick);

void BM_BroydenUpdate(benchmark::State& state) {
  ctrl::JacobianEstimate est =
      ctrl::JacobianEstimate::rectangular_identity(8, 3, 0.1);
  SplitMix64 rng(5);
  Eigen::VectorXd dx(3), dy(8);
  for (auto _ : state) {
    for (int i = 0; i < 3; ++i) dx[i] = rng.next_uniform(-1e-3, 1e-3);
    for (int i = 0; i < 8; ++i) dy[i] = rng.next_uniform(-1e-3, 1e-3);
    benchmark::DoNotOptimize(ctrl::broyden_update(est, dy, dx));
  }
}
BENCHMARK(BM_BroydenUpdate);

void BM_ControlStep(benchmark::State& state) {
  ctrl::JacobianEstimate est =
      ctrl::JacobianEstimate::rectangular_identity(8, 3, 0.1);
  est.jacobian = random_matrix(8, 3, 11);
  ctrl::ControllerConfig cfg;
  cfg.gain = 3.5 * Eigen::MatrixXd::Identity(8, 8);
  const Eigen::VectorXd y = Eigen::VectorXd::Zero(8);
  const Eigen::VectorXd target = random_matrix(8, 1, 12);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ctrl::control_step(est, y, cfg, target));
  }
}
BENCHMARK(BM_ControlStep);

void BM_ForwardKinematics(benchmark::State& state) {
  const kin::ArmModel arm = kin::ArmModel::default_six_dof();
  kin::KinematicsState ks;
  ks.arm_joints.resize(6);
  ks.arm_joints << 0.3, 0.7, -1.2, 0.4, 0.6, 0.2;
  for (auto _ : state) {
    benchmark::DoNotOptimize(kin::forward_kinematics(ks, arm));
  }
}
BENCHMARK(BM_ForwardKinematics);

void BM_IkVelocity(benchmark::State& state) {
  const kin::ArmModel arm = kin::ArmModel::default_six_dof();
  kin::KinematicsState ks;
  ks.arm_joints.resize(6);
  ks.arm_joints << 0.3, 0.7, -1.2, 0.4, 0.6, 0.2;
  const Eigen::Vector3d cmd(0.02, -0.01, 0.015);
  for (auto _ : state) {
    benchmark::DoNotOptimize(kin::ik_velocity(ks, arm, cmd, true));
  }
}
BENCHMARK(BM_IkVelocity);

}  // namespace

BENCHMARK_MAIN();
