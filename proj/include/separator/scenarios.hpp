// Scenario configuration, the three use-case recipes, wave detection with
// overshoot/undershoot metrics, multi-seed aggregation, reference-table
// comparison and report persistence.
#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "separator/world.hpp"

namespace separator {

struct SetpointChange {
  double time = 0.0;
  Loop loop = Loop::Oil;
  double value = 40.0;
};

/// Interval over which network statistics are reported.
struct StatsWindow {
  std::string label;
  double start = 0.0;
  double end = 0.0;
};

struct ScenarioConfig {
  std::string name;
  std::string description;
  double duration = 600.0;  // s
  std::vector<std::uint64_t> seeds{1};
  WorldConfig world;
  std::vector<SetpointChange> setpoint_schedule;
  std::vector<JammingWindow> jamming_schedule;
  std::vector<StatsWindow> stats_windows;
  std::string output_path;

  /// Throws ConfigError naming the violated invariant.
  void validate() const;
};

nlohmann::json to_json(const ScenarioConfig& config);
/// Missing keys take the defaults. Throws ConfigError on malformed input.
ScenarioConfig scenario_from_json(const nlohmann::json& j);
ScenarioConfig load_scenario(const std::string& path);

/// The calibrated rig with sensor noise, filled to the set-points' start
/// conditions: empty separator, pump running, V3 at 60 %.
ScenarioConfig calibrated_rig();
ScenarioConfig usecase1();
ScenarioConfig usecase2();
ScenarioConfig usecase3();
/// Built-in recipes by name ("usecase1", "usecase2", "usecase3").
std::vector<ScenarioConfig> builtin_recipes();
std::optional<ScenarioConfig> find_recipe(const std::string& name);

/// One oscillation about the set-point, between consecutive upward crossings.
struct Wave {
  int index = 0;  // 1-based within its set-point segment
  double start = 0.0;
  double end = 0.0;
  double setpoint = 0.0;
  double peak_level = 0.0;
  double trough_level = 0.0;  // minimum after the peak
  double overshoot = 0.0;     // percentage points above the set-point
  double undershoot = 0.0;    // percentage points below, after the peak
};

/// A stretch of constant set-point and what happened in it.
struct SetpointSegment {
  double start = 0.0;
  double end = 0.0;
  double setpoint = 0.0;
  /// Depth below the set-point before the first upward crossing, when the
  /// segment starts above it.
  std::optional<double> leading_undershoot;
  std::vector<Wave> waves;
};

/// Upward crossing at sample k: level[k-1] <= sp < level[k]. Waves restart
/// when the set-point changes; the open stretch after the last crossing of
/// a segment is not a wave.
std::vector<Wave> detect_waves(const std::vector<double>& time, const std::vector<double>& level,
                               const std::vector<double>& setpoint);
std::vector<SetpointSegment> segment_waves(const std::vector<double>& time,
                                           const std::vector<double>& level,
                                           const std::vector<double>& setpoint);

struct WindowStats {
  std::string label;
  NetworkStats stats;
};

struct RunResult {
  std::uint64_t seed = 0;
  std::vector<TracePoint> trace;
  std::vector<SetpointSegment> water_segments;
  std::vector<SetpointSegment> oil_segments;
  NetworkStats overall;
  std::vector<WindowStats> windows;
  std::vector<AlarmEvent> alarms;
  std::vector<CommandRecord> commands;
  std::vector<AttemptRecord> attempts;
  PlantState final_state;
  std::size_t conservation_diagnostics = 0;
  bool failed = false;
  std::string failure;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample (n - 1) form; 0 for n < 2
  std::size_t n = 0;
};

/// Mean and sample standard deviation.
MeanStd mean_std(const std::vector<double>& values);

struct ScenarioReport {
  std::string scenario;
  ScenarioConfig config;
  std::vector<RunResult> runs;
  bool failed = false;
  std::vector<std::string> failures;

  /// Flattened cross-seed aggregates, e.g. "water.wave2.overshoot.mean",
  /// "oil.step.undershoot1.mean", "network.jam_7min.path_stability.mean".
  std::map<std::string, double> metrics() const;
};

/// Executes one run for a single seed.
RunResult run_single(const ScenarioConfig& config, std::uint64_t seed);

/// One run per seed (in parallel up to `jobs`), then aggregation.
ScenarioReport run_scenario(const ScenarioConfig& config, unsigned jobs = 0);

nlohmann::json report_to_json(const ScenarioReport& report, bool include_series = true);
/// Reads back the metrics and failure flag of a persisted report.
std::map<std::string, double> metrics_from_report_json(const nlohmann::json& j);

/// Per-tick CSV with header
/// time_s,water_level_pct,oil_level_pct,lv1_pct,lv2_pct,setpoint_w,setpoint_o,alarms
std::string series_csv(const RunResult& run);
std::string attempts_csv(const RunResult& run);

/// Info rows are printed alongside the verdict but never fail it.
enum class Comparison { Within, AtMost, AtLeast, Info };

struct ReferenceRow {
  std::string metric;
  double reference = 0.0;
  double tolerance = 0.0;
  Comparison comparison = Comparison::Within;
  std::string source;  // human label, e.g. "Table I wave 2"
};

struct ReferenceTable {
  std::string name;
  std::string description;
  std::vector<ReferenceRow> rows;
};

ReferenceTable reference_from_json(const nlohmann::json& j);
ReferenceTable load_reference(const std::string& path);

struct RowVerdict {
  ReferenceRow row;
  double value = 0.0;
  bool pass = false;
  std::string line;
};

struct ComparisonVerdict {
  bool pass = true;
  std::vector<RowVerdict> rows;
  std::string diff;  // one line per row
};

/// A metric named by the reference is missing from the report.
class ComparisonError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ComparisonVerdict compare_to_reference(const std::map<std::string, double>& metrics,
                                       const ReferenceTable& reference);

}  // namespace separator
