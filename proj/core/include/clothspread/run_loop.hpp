#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "clothspread/scenario.hpp"

namespace clothspread::harness {

struct GraspMetrics {
  int grasp_serial = 0;
  int grasp_feature = 0;
  std::string result;  // converged | timeout | grasp_lost
  double start_time = 0.0;
  double end_time = 0.0;
  double final_error = 0.0;
  // First log timestamp after which the task error stays below the
  // threshold for the hold window; NaN when the run never converged.
  double convergence_time = 0.0;
  long ticks = 0;
};

struct RunMetrics {
  std::string scenario_id;
  std::uint64_t seed = 0;
  std::string outcome;  // converged | timeout | diverged | stalled
  bool flattened = false;
  double initial_error = 0.0;  // noise-free, at run start
  double final_error = 0.0;    // task error of the last controller tick
  double sim_time_end = 0.0;
  double base_path_length = 0.0;
  long total_control_ticks = 0;
  int standing_positions = 0;
  std::vector<int> grasp_attempts;  // per standing position
  std::vector<GraspMetrics> grasps;
};

// Exit codes shared by the library and the CLI.
// 0 converged/valid, 2 timeout, 3 diverged, 4 config error.
int exit_code_for(const RunMetrics& metrics);

// Builds the world, runs the behavior tree until overall SUCCESS or the
// sim-time budget, and (when out_dir is set) writes controller.csv,
// bt_trace.csv, base_path.csv, features.csv, and metrics.json.
RunMetrics run_scenario(const ScenarioConfig& config,
                        const std::optional<std::filesystem::path>& out_dir);

std::string metrics_to_json(const RunMetrics& metrics);
RunMetrics metrics_from_json_text(const std::string& text);
RunMetrics load_metrics(const std::filesystem::path& run_dir);

struct CompareReport {
  std::string scenario_id;
  struct Row {
    std::string run_dir;
    std::uint64_t seed = 0;
    std::string outcome;
    double final_error = 0.0;
    double sim_time_end = 0.0;
    bool aggregated = false;  // diverged runs are flagged, not aggregated
  };
  std::vector<Row> rows;
  // Aggregates over runs that completed (converged or timeout).
  double mean_final_error = 0.0;
  double min_final_error = 0.0;
  double max_final_error = 0.0;
  double mean_time = 0.0;
  double min_time = 0.0;
  double max_time = 0.0;
  int aggregated_runs = 0;
};

// Throws ScenarioError when the runs mix scenario ids.
CompareReport compare_runs(
    const std::vector<std::pair<std::string, RunMetrics>>& runs);

std::string render_report(const CompareReport& report);
void write_report_csv(const CompareReport& report,
                      const std::filesystem::path& path);

}  // namespace clothspread::harness
