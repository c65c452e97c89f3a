#include "clothspread/run_loop.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <sstream>

#include "clothspread/csv_log.hpp"

namespace clothspread::harness {

using nlohmann::json;

namespace {

constexpr long kStallLimit = 2000;  // bt ticks without sim-time progress

// Streams the run into the CSV logs and keeps what metrics need.
class Recorder : public bt::RunRecorder {
 public:
  Recorder(const std::optional<std::filesystem::path>& out_dir, int k, int d,
           double error_threshold, double hold)
      : feature_count_(k),
        dims_(d),
        threshold_(error_threshold),
        hold_(hold) {
    if (!out_dir) return;
    std::filesystem::create_directories(*out_dir);

    std::vector<std::string> ctrl_header = {"grasp", "step", "sim_time"};
    const int m = k * d;
    for (int i = 0; i < m; ++i) ctrl_header.push_back("s_" + std::to_string(i));
    for (int i = 0; i < m; ++i) ctrl_header.push_back("y_" + std::to_string(i));
    for (int i = 0; i < m; ++i)
      ctrl_header.push_back("ystar_" + std::to_string(i));
    ctrl_header.insert(ctrl_header.end(),
                       {"task_error", "u_x", "u_y", "u_z", "dx_norm",
                        "update_accepted"});
    controller_ = std::make_unique<CsvWriter>(*out_dir / "controller.csv",
                                              ctrl_header);

    trace_ = std::make_unique<CsvWriter>(
        *out_dir / "bt_trace.csv",
        std::vector<std::string>{"bt_tick", "sim_time", "node", "status"});

    base_ = std::make_unique<CsvWriter>(
        *out_dir / "base_path.csv",
        std::vector<std::string>{"tick", "sim_time", "x", "y", "yaw"});

    std::vector<std::string> feat_header = {"tick", "sim_time"};
    for (int f = 1; f <= k; ++f) {
      feat_header.push_back("f" + std::to_string(f) + "_x");
      feat_header.push_back("f" + std::to_string(f) + "_y");
      feat_header.push_back("f" + std::to_string(f) + "_z");
    }
    features_ = std::make_unique<CsvWriter>(*out_dir / "features.csv",
                                            feat_header);
  }

  void on_world_tick(std::uint64_t tick, double sim_time,
                     const kin::KinematicsState& robot,
                     const ctrl::FeatureVector& true_features) override {
    if (have_base_) {
      base_path_length_ += std::hypot(robot.base.x - last_x_, robot.base.y - last_y_);
    }
    last_x_ = robot.base.x;
    last_y_ = robot.base.y;
    have_base_ = true;

    if (base_) {
      base_->write_row({CsvWriter::num(static_cast<unsigned long long>(tick)),
                        CsvWriter::num(sim_time), CsvWriter::num(robot.base.x),
                        CsvWriter::num(robot.base.y),
                        CsvWriter::num(robot.base.rz)});
    }
    if (features_) {
      std::vector<std::string> row = {
          CsvWriter::num(static_cast<unsigned long long>(tick)),
          CsvWriter::num(sim_time)};
      const int d = true_features.dims;
      for (int f = 0; f < feature_count_; ++f) {
        const double x = true_features.values[f * d];
        const double y = true_features.values[f * d + 1];
        const double z =
            d > 2 ? true_features.values[f * d + 2] : 0.0;  // planar sensors
        row.push_back(CsvWriter::num(x));
        row.push_back(CsvWriter::num(y));
        row.push_back(CsvWriter::num(z));
      }
      features_->write_row(row);
    }
  }

  void on_controller_tick(int grasp_serial, const ctrl::TickRecord& rec,
                          const Eigen::VectorXd& target) override {
    ++total_control_ticks_;
    last_error_ = rec.task_error;
    have_controller_tick_ = true;
    series_[grasp_serial].emplace_back(rec.sim_time, rec.task_error);
    if (controller_) {
      std::vector<std::string> row = {CsvWriter::num(static_cast<long>(grasp_serial)),
                                      CsvWriter::num(rec.step_index),
                                      CsvWriter::num(rec.sim_time)};
      for (int i = 0; i < rec.s.size(); ++i) row.push_back(CsvWriter::num(rec.s[i]));
      for (int i = 0; i < rec.y.size(); ++i) row.push_back(CsvWriter::num(rec.y[i]));
      for (int i = 0; i < target.size(); ++i) row.push_back(CsvWriter::num(target[i]));
      row.push_back(CsvWriter::num(rec.task_error));
      for (int i = 0; i < 3; ++i)
        row.push_back(CsvWriter::num(i < rec.u.size() ? rec.u[i] : 0.0));
      row.push_back(CsvWriter::num(rec.dx_norm));
      row.push_back(rec.update_accepted ? "1" : "0");
      controller_->write_row(row);
    }
  }

  void on_standing_position(int /*serial*/, const kin::Waypoint&) override {
    grasp_attempts_.push_back(0);
  }

  void on_grasp_attempt(int standing_serial) override {
    if (standing_serial >= 0 &&
        standing_serial < static_cast<int>(grasp_attempts_.size())) {
      ++grasp_attempts_[standing_serial];
    }
  }

  void on_deformation_result(int grasp_serial, int feature,
                             ctrl::DeformationResult result, double final_error,
                             double start_time, double end_time,
                             long ticks) override {
    GraspMetrics g;
    g.grasp_serial = grasp_serial;
    g.grasp_feature = feature;
    switch (result) {
      case ctrl::DeformationResult::converged:
        g.result = "converged";
        break;
      case ctrl::DeformationResult::grasp_lost:
        g.result = "grasp_lost";
        break;
      default:
        g.result = "timeout";
        break;
    }
    g.start_time = start_time;
    g.end_time = end_time;
    g.final_error = final_error;
    g.ticks = ticks;
    g.convergence_time = convergence_time_for(grasp_serial);
    grasps_.push_back(std::move(g));
  }

  void trace(long bt_tick, double sim_time, const std::string& node,
             const char* status) {
    if (trace_) {
      trace_->write_row({CsvWriter::num(bt_tick), CsvWriter::num(sim_time),
                         node, status});
    }
  }

  // First logged timestamp after which the error stays below the
  // threshold through the end of the session.
  double convergence_time_for(int grasp_serial) const {
    const auto it = series_.find(grasp_serial);
    if (it == series_.end() || it->second.empty()) {
      return std::numeric_limits<double>::quiet_NaN();
    }
    const auto& s = it->second;
    if (s.back().second >= threshold_) {
      return std::numeric_limits<double>::quiet_NaN();
    }
    double t = s.back().first;
    for (auto r = s.rbegin(); r != s.rend(); ++r) {
      if (r->second >= threshold_) break;
      t = r->first;
    }
    return t;
  }

  double base_path_length() const { return base_path_length_; }
  long total_control_ticks() const { return total_control_ticks_; }
  double last_error() const { return last_error_; }
  bool have_controller_tick() const { return have_controller_tick_; }
  const std::vector<int>& grasp_attempts() const { return grasp_attempts_; }
  const std::vector<GraspMetrics>& grasps() const { return grasps_; }

 private:
  int feature_count_;
  int dims_;
  double threshold_;
  double hold_;
  std::unique_ptr<CsvWriter> controller_, trace_, base_, features_;
  double base_path_length_ = 0.0;
  double last_x_ = 0.0, last_y_ = 0.0;
  bool have_base_ = false;
  long total_control_ticks_ = 0;
  double last_error_ = std::numeric_limits<double>::quiet_NaN();
  bool have_controller_tick_ = false;
  std::vector<int> grasp_attempts_;
  std::vector<GraspMetrics> grasps_;
  std::map<int, std::vector<std::pair<double, double>>> series_;
};

double initial_task_error(const bt::World& world) {
  const ctrl::FeatureVector s = world.true_now();
  return (world.targets() - s.values).norm();
}

}  // namespace

int exit_code_for(const RunMetrics& metrics) {
  if (metrics.outcome == "converged") return 0;
  if (metrics.outcome == "diverged") return 3;
  return 2;  // timeout or stalled
}

RunMetrics run_scenario(const ScenarioConfig& config,
                        const std::optional<std::filesystem::path>& out_dir) {
  bt::WorldInit init = make_world_init(config);

  RunMetrics metrics;
  metrics.scenario_id = config.scenario_id;
  metrics.seed = config.seed;

  const int k = static_cast<int>(init.attachments.size());
  const int d = init.attachments.front().dims;
  Recorder recorder(out_dir, k, d, config.params.convergence_threshold,
                    config.params.convergence_hold);

  bt::World world(std::move(init));
  world.recorder = &recorder;
  metrics.initial_error = initial_task_error(world);

  bt::Tree tree = bt::build_spreading_tree(config.params.retry_count);
  bt::Blackboard bb;
  bb.set<bt::World*>(bt::keys::world, &world);

  long bt_tick = 0;
  tree.set_tracer([&](const bt::Node& node, bt::TickStatus status) {
    recorder.trace(bt_tick, world.time(), node.name(), bt::to_string(status));
  });

  metrics.outcome = "timeout";
  long stalled_ticks = 0;
  std::uint64_t last_world_tick = world.tick();
  try {
    while (true) {
      const bt::TickStatus status = tree.tick(bb);
      ++bt_tick;
      if (status == bt::TickStatus::success) {
        metrics.outcome = "converged";
        metrics.flattened = true;
        break;
      }
      if (world.time() >= config.max_sim_time) {
        metrics.outcome = "timeout";
        break;
      }
      if (world.tick() == last_world_tick) {
        if (++stalled_ticks >= kStallLimit) {
          metrics.outcome = "stalled";
          break;
        }
      } else {
        stalled_ticks = 0;
        last_world_tick = world.tick();
      }
    }
  } catch (const sim::SimulationDivergedError&) {
    metrics.outcome = "diverged";
  }

  metrics.sim_time_end = world.time();
  metrics.base_path_length = recorder.base_path_length();
  metrics.total_control_ticks = recorder.total_control_ticks();
  metrics.standing_positions = world.standing_serial() + 1;
  metrics.grasp_attempts = recorder.grasp_attempts();
  metrics.grasps = recorder.grasps();
  metrics.final_error = recorder.have_controller_tick()
                            ? recorder.last_error()
                            : metrics.initial_error;

  if (out_dir) {
    std::ofstream mf(*out_dir / "metrics.json");
    mf << metrics_to_json(metrics);
  }
  return metrics;
}

std::string metrics_to_json(const RunMetrics& m) {
  json j;
  j["scenario_id"] = m.scenario_id;
  j["seed"] = m.seed;
  j["outcome"] = m.outcome;
  j["flattened"] = m.flattened;
  j["initial_error"] = m.initial_error;
  j["final_error"] = m.final_error;
  j["sim_time_end"] = m.sim_time_end;
  j["base_path_length"] = m.base_path_length;
  j["total_control_ticks"] = m.total_control_ticks;
  j["standing_positions"] = m.standing_positions;
  j["grasp_attempts"] = m.grasp_attempts;
  j["grasps"] = json::array();
  for (const GraspMetrics& g : m.grasps) {
    json jg;
    jg["grasp_serial"] = g.grasp_serial;
    jg["grasp_feature"] = g.grasp_feature;
    jg["result"] = g.result;
    jg["start_time"] = g.start_time;
    jg["end_time"] = g.end_time;
    jg["final_error"] = g.final_error;
    if (std::isnan(g.convergence_time)) {
      jg["convergence_time"] = nullptr;
    } else {
      jg["convergence_time"] = g.convergence_time;
    }
    jg["ticks"] = g.ticks;
    j["grasps"].push_back(jg);
  }
  return j.dump(2) + "\n";
}

RunMetrics metrics_from_json_text(const std::string& text) {
  const json j = json::parse(text);
  RunMetrics m;
  m.scenario_id = j.at("scenario_id").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.outcome = j.at("outcome").get<std::string>();
  m.flattened = j.at("flattened").get<bool>();
  m.initial_error = j.at("initial_error").get<double>();
  m.final_error = j.at("final_error").get<double>();
  m.sim_time_end = j.at("sim_time_end").get<double>();
  m.base_path_length = j.at("base_path_length").get<double>();
  m.total_control_ticks = j.at("total_control_ticks").get<long>();
  m.standing_positions = j.at("standing_positions").get<int>();
  m.grasp_attempts = j.at("grasp_attempts").get<std::vector<int>>();
  for (const json& jg : j.at("grasps")) {
    GraspMetrics g;
    g.grasp_serial = jg.at("grasp_serial").get<int>();
    g.grasp_feature = jg.at("grasp_feature").get<int>();
    g.result = jg.at("result").get<std::string>();
    g.start_time = jg.at("start_time").get<double>();
    g.end_time = jg.at("end_time").get<double>();
    g.final_error = jg.at("final_error").get<double>();
    g.convergence_time = jg.at("convergence_time").is_null()
                             ? std::numeric_limits<double>::quiet_NaN()
                             : jg.at("convergence_time").get<double>();
    g.ticks = jg.at("ticks").get<long>();
    m.grasps.push_back(std::move(g));
  }
  return m;
}

RunMetrics load_metrics(const std::filesystem::path& run_dir) {
  std::ifstream in(run_dir / "metrics.json");
  if (!in) {
    throw ScenarioError("cannot open " + (run_dir / "metrics.json").string());
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return metrics_from_json_text(buf.str());
}

CompareReport compare_runs(
    const std::vector<std::pair<std::string, RunMetrics>>& runs) {
  if (runs.empty()) {
    throw ScenarioError("compare: no runs given");
  }
  CompareReport report;
  report.scenario_id = runs.front().second.scenario_id;

  double sum_err = 0.0, sum_time = 0.0;
  for (const auto& [dir, m] : runs) {
    if (m.scenario_id != report.scenario_id) {
      throw ScenarioError("compare: mismatched scenario ids '" +
                          report.scenario_id + "' vs '" + m.scenario_id + "'");
    }
    CompareReport::Row row;
    row.run_dir = dir;
    row.seed = m.seed;
    row.outcome = m.outcome;
    row.final_error = m.final_error;
    row.sim_time_end = m.sim_time_end;
    row.aggregated = m.outcome == "converged" || m.outcome == "timeout";
    if (row.aggregated) {
      if (report.aggregated_runs == 0) {
        report.min_final_error = report.max_final_error = m.final_error;
        report.min_time = report.max_time = m.sim_time_end;
      } else {
        report.min_final_error = std::min(report.min_final_error, m.final_error);
        report.max_final_error = std::max(report.max_final_error, m.final_error);
        report.min_time = std::min(report.min_time, m.sim_time_end);
        report.max_time = std::max(report.max_time, m.sim_time_end);
      }
      sum_err += m.final_error;
      sum_time += m.sim_time_end;
      ++report.aggregated_runs;
    }
    report.rows.push_back(std::move(row));
  }
  if (report.aggregated_runs > 0) {
    report.mean_final_error = sum_err / report.aggregated_runs;
    report.mean_time = sum_time / report.aggregated_runs;
  }
  return report;
}

std::string render_report(const CompareReport& r) {
  std::ostringstream out;
  out << "scenario: " << r.scenario_id << "\n";
  out << "run_dir  seed  outcome  final_error  sim_time\n";
  for (const auto& row : r.rows) {
    out << row.run_dir << "  " << row.seed << "  " << row.outcome << "  "
        << row.final_error << "  " << row.sim_time_end;
    if (!row.aggregated) out << "  [excluded from aggregates]";
    out << "\n";
  }
  if (r.aggregated_runs > 0) {
    out << "final_error mean/min/max: " << r.mean_final_error << " / "
        << r.min_final_error << " / " << r.max_final_error << "\n";
    out << "sim_time   mean/min/max: " << r.mean_time << " / " << r.min_time
        << " / " << r.max_time << "\n";
  }
  return out.str();
}

void write_report_csv(const CompareReport& r,
                      const std::filesystem::path& path) {
  CsvWriter w(path, {"run_dir", "seed", "scenario_id", "outcome",
                     "final_error", "sim_time", "aggregated"});
  for (const auto& row : r.rows) {
    w.write_row({row.run_dir,
                 CsvWriter::num(static_cast<unsigned long long>(row.seed)),
                 r.scenario_id, row.outcome, CsvWriter::num(row.final_error),
                 CsvWriter::num(row.sim_time_end), row.aggregated ? "1" : "0"});
  }
}

}  // namespace clothspread::harness
