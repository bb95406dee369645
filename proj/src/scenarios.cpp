#include "separator/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

namespace separator {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// JSON helpers

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

// Infinite integral times are written as null.
void read_ti(const json& j, double& ti, const std::string& where) {
  if (!j.contains("ti")) return;
  if (j.at("ti").is_null()) {
    ti = std::numeric_limits<double>::infinity();
    return;
  }
  read(j, "ti", ti, where);
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json geometry_json(const TankGeometry& g) {
  return {{"left_area", g.left_area},
          {"right_area", g.right_area},
          {"tank_height", g.tank_height},
          {"weir_height_frac", g.weir_height_frac},
          {"feed_capacity_water", g.feed_capacity_water},
          {"feed_capacity_oil", g.feed_capacity_oil}};
}

void geometry_from(const json& j, TankGeometry& g) {
  const std::string w = "geometry";
  check_keys(j, w, {"left_area", "right_area", "tank_height", "weir_height_frac",
                    "feed_capacity_water", "feed_capacity_oil"});
  read(j, "left_area", g.left_area, w);
  read(j, "right_area", g.right_area, w);
  read(j, "tank_height", g.tank_height, w);
  read(j, "weir_height_frac", g.weir_height_frac, w);
  read(j, "feed_capacity_water", g.feed_capacity_water, w);
  read(j, "feed_capacity_oil", g.feed_capacity_oil, w);
}

json params_json(const PlantParams& p) {
  return {{"gravity", p.gravity},
          {"rho_water", p.rho_water},
          {"rho_oil", p.rho_oil},
          {"water_fraction", p.water_fraction},
          {"q_pump_max", p.q_pump_max},
          {"k_sep", p.k_sep},
          {"cv_water", p.cv_water},
          {"cv_oil", p.cv_oil},
          {"c_weir", p.c_weir},
          {"ambient_temp", p.ambient_temp},
          {"pump_heating", p.pump_heating},
          {"temp_relax", p.temp_relax},
          {"static_pressure", p.static_pressure},
          {"pump_head", p.pump_head},
          {"restriction_gain", p.restriction_gain}};
}

void params_from(const json& j, PlantParams& p) {
  const std::string w = "plant";
  check_keys(j, w, {"gravity", "rho_water", "rho_oil", "water_fraction", "q_pump_max", "k_sep",
                    "cv_water", "cv_oil", "c_weir", "ambient_temp", "pump_heating", "temp_relax",
                    "static_pressure", "pump_head", "restriction_gain"});
  read(j, "gravity", p.gravity, w);
  read(j, "rho_water", p.rho_water, w);
  read(j, "rho_oil", p.rho_oil, w);
  read(j, "water_fraction", p.water_fraction, w);
  read(j, "q_pump_max", p.q_pump_max, w);
  read(j, "k_sep", p.k_sep, w);
  read(j, "cv_water", p.cv_water, w);
  read(j, "cv_oil", p.cv_oil, w);
  read(j, "c_weir", p.c_weir, w);
  read(j, "ambient_temp", p.ambient_temp, w);
  read(j, "pump_heating", p.pump_heating, w);
  read(j, "temp_relax", p.temp_relax, w);
  read(j, "static_pressure", p.static_pressure, w);
  read(j, "pump_head", p.pump_head, w);
  read(j, "restriction_gain", p.restriction_gain, w);
}

json initial_json(const PlantState& s) {
  json valves = json::object();
  for (ValveId v : kAllValves)
    valves[std::string(to_string(v))] = {{"position", s.valve(v).position},
                                         {"command", s.valve(v).command}};
  return {{"left_water_vol", s.left_water_vol},
          {"left_oil_vol", s.left_oil_vol},
          {"left_unsep_water", s.left_unsep_water},
          {"left_unsep_oil", s.left_unsep_oil},
          {"right_oil_vol", s.right_oil_vol},
          {"feed_water_vol", s.feed_water_vol},
          {"feed_oil_vol", s.feed_oil_vol},
          {"valves", valves},
          {"pump_running", s.pump_running},
          {"oil_temp", s.oil_temp},
          {"feedline_pressure", s.feedline_pressure}};
}

void initial_from(const json& j, PlantState& s) {
  const std::string w = "initial";
  check_keys(j, w, {"left_water_vol", "left_oil_vol", "left_unsep_water", "left_unsep_oil",
                    "right_oil_vol", "feed_water_vol", "feed_oil_vol", "valves", "pump_running",
                    "oil_temp", "feedline_pressure"});
  read(j, "left_water_vol", s.left_water_vol, w);
  read(j, "left_oil_vol", s.left_oil_vol, w);
  read(j, "left_unsep_water", s.left_unsep_water, w);
  read(j, "left_unsep_oil", s.left_unsep_oil, w);
  read(j, "right_oil_vol", s.right_oil_vol, w);
  read(j, "feed_water_vol", s.feed_water_vol, w);
  read(j, "feed_oil_vol", s.feed_oil_vol, w);
  read(j, "pump_running", s.pump_running, w);
  read(j, "oil_temp", s.oil_temp, w);
  read(j, "feedline_pressure", s.feedline_pressure, w);
  if (j.contains("valves")) {
    const json& v = j.at("valves");
    if (!v.is_object()) throw ConfigError("initial.valves: expected an object");
    for (const auto& [key, val] : v.items()) {
      auto id = valve_from_string(key);
      if (!id) throw ConfigError("initial.valves: unknown valve '" + key + "'");
      const std::string vw = "initial.valves." + key;
      check_keys(val, vw, {"position", "command"});
      read(val, "position", s.valve(*id).position, vw);
      read(val, "command", s.valve(*id).command, vw);
    }
  }
}

json pid_json(const PidController& p) {
  return {{"kp", p.kp},
          {"ti", finite_or_null(p.ti)},
          {"kd", p.kd},
          {"setpoint", p.setpoint},
          {"out_min", p.out_min},
          {"out_max", p.out_max},
          {"integral_mode", p.mode == IntegralMode::TimeSeconds ? "time_seconds" : "gain_per_second"}};
}

void pid_from(const json& j, PidController& p, const std::string& w) {
  check_keys(j, w, {"kp", "ti", "kd", "setpoint", "out_min", "out_max", "integral_mode"});
  read(j, "kp", p.kp, w);
  read_ti(j, p.ti, w);
  read(j, "kd", p.kd, w);
  read(j, "setpoint", p.setpoint, w);
  read(j, "out_min", p.out_min, w);
  read(j, "out_max", p.out_max, w);
  if (j.contains("integral_mode")) {
    std::string m;
    read(j, "integral_mode", m, w);
    if (m == "time_seconds") p.mode = IntegralMode::TimeSeconds;
    else if (m == "gain_per_second") p.mode = IntegralMode::GainPerSecond;
    else throw ConfigError(w + ".integral_mode: expected time_seconds or gain_per_second");
  }
}

json window_json(const JammingWindow& w) {
  return {{"start", w.start}, {"end", w.end}, {"channels", w.channels}, {"intensity", w.intensity}};
}

JammingWindow window_from(const json& j, const std::string& w) {
  check_keys(j, w, {"start", "end", "channels", "intensity"});
  JammingWindow out;
  read(j, "start", out.start, w);
  read(j, "end", out.end, w);
  read(j, "channels", out.channels, w);
  read(j, "intensity", out.intensity, w);
  return out;
}

json stats_json(const NetworkStats& s) {
  return {{"latency_ms_mean", s.latency_ms_mean ? json(*s.latency_ms_mean) : json(nullptr)},
          {"path_stability_pct", s.path_stability_pct},
          {"reliability_pct", s.reliability_pct},
          {"attempts", s.attempts},
          {"acked", s.acked},
          {"created", s.created},
          {"delivered", s.delivered},
          {"in_flight", s.in_flight}};
}

json wave_json(const Wave& w) {
  return {{"index", w.index},
          {"start", w.start},
          {"end", w.end},
          {"setpoint", w.setpoint},
          {"peak_level", w.peak_level},
          {"trough_level", w.trough_level},
          {"overshoot", w.overshoot},
          {"undershoot", w.undershoot}};
}

json segment_json(const SetpointSegment& s) {
  json waves = json::array();
  for (const auto& w : s.waves) waves.push_back(wave_json(w));
  return {{"start", s.start},
          {"end", s.end},
          {"setpoint", s.setpoint},
          {"leading_undershoot", s.leading_undershoot ? json(*s.leading_undershoot) : json(nullptr)},
          {"waves", waves}};
}

std::string fmt(double v, int precision = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

// ---------------------------------------------------------------------------
// Recipes

constexpr double kUseCase2StepTime = 760.0;
constexpr double kUseCase3JamStart = 300.0;
constexpr double kStatsWindow = 120.0;

std::vector<std::uint64_t> five_seeds() { return {1, 2, 3, 4, 5}; }

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void ScenarioConfig::validate() const {
  if (name.empty()) throw ConfigError("name must not be empty");
  if (!(duration > 0.0) || !std::isfinite(duration)) throw ConfigError("duration must be > 0");
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw ConfigError("seeds must be distinct");

  const double trip = world.safety.level_trip;
  for (const auto* pid : {&world.water_pid, &world.oil_pid})
    if (!(pid->setpoint > 0.0 && pid->setpoint < trip))
      throw ConfigError("setpoint " + fmt(pid->setpoint, 3) + " outside (0, " + fmt(trip, 0) +
                        "): setpoints must stay below the trip level");
  for (std::size_t i = 0; i < setpoint_schedule.size(); ++i) {
    const auto& c = setpoint_schedule[i];
    if (i > 0 && c.time < setpoint_schedule[i - 1].time)
      throw ConfigError("setpoint_schedule must be sorted by time");
    if (!(c.time >= 0.0 && c.time <= duration))
      throw ConfigError("setpoint_schedule time outside [0, duration]");
    if (!(c.value > 0.0 && c.value < trip))
      throw ConfigError("setpoint " + fmt(c.value, 3) + " outside (0, " + fmt(trip, 0) +
                        "): setpoints must stay below the trip level");
  }
  for (std::size_t i = 0; i < jamming_schedule.size(); ++i) {
    const auto& w = jamming_schedule[i];
    if (i > 0 && w.start < jamming_schedule[i - 1].start)
      throw ConfigError("jamming_schedule must be sorted by start time");
    if (!(w.end > w.start)) throw ConfigError("jamming window end must be after start");
    if (!(w.intensity >= 0.0 && w.intensity <= 1.0))
      throw ConfigError("jamming intensity outside [0, 1]");
    for (int ch : w.channels)
      if (ch < kFirstChannel || ch > kLastChannel)
        throw ConfigError("jamming channel " + std::to_string(ch) + " outside 11..26");
  }
  for (const auto& w : stats_windows) {
    if (w.label.empty()) throw ConfigError("stats window label must not be empty");
    if (!(w.end > w.start)) throw ConfigError("stats window '" + w.label + "' end must be after start");
  }
  (void)make_world(world);
}

json to_json(const ScenarioConfig& c) {
  const WorldConfig& w = c.world;
  json sensors = json::object();
  for (const auto& s : w.sensors)
    sensors[std::string(to_string(s.id))] = {{"noise_std", s.noise_std},
                                             {"calibration_bias", s.calibration_bias},
                                             {"sample_period", s.sample_period}};
  json quality = json::array();
  for (const auto& row : w.link_quality) quality.push_back(row);
  json positions = json::array();
  for (const auto& p : w.positions) positions.push_back({p.x, p.y});
  json setpoints = json::array();
  for (const auto& s : c.setpoint_schedule)
    setpoints.push_back({{"time", s.time}, {"loop", to_string(s.loop)}, {"value", s.value}});
  json jams = json::array();
  for (const auto& j : c.jamming_schedule) jams.push_back(window_json(j));
  json windows = json::array();
  for (const auto& s : c.stats_windows)
    windows.push_back({{"label", s.label}, {"start", s.start}, {"end", s.end}});

  return {
      {"name", c.name},
      {"description", c.description},
      {"duration", c.duration},
      {"seeds", c.seeds},
      {"output_path", c.output_path},
      {"step", w.step},
      {"geometry", geometry_json(w.geometry)},
      {"plant", params_json(w.params)},
      {"initial", initial_json(w.initial)},
      {"sensors", sensors},
      {"controller",
       {{"period", w.controller.period},
        {"stale_after", w.controller.stale_after},
        {"water_pv_filter", w.controller.water_pv_filter},
        {"oil_pv_filter", w.controller.oil_pv_filter},
        {"offset_slots", w.controller_offset_slots},
        {"water", pid_json(w.water_pid)},
        {"oil", pid_json(w.oil_pid)}}},
      {"safety",
       {{"level_trip", w.safety.level_trip},
        {"feed_pressure_trip", w.safety.feed_pressure_trip},
        {"oil_temp_trip", w.safety.oil_temp_trip}}},
      {"network",
       {{"p_link", w.radio.p_link},
        {"p_jam", w.radio.p_jam},
        {"min_link_quality", w.mesh.min_link_quality},
        {"failover_after", w.mesh.failover_after},
        {"retries_per_hop", w.mesh.retries_per_hop},
        {"airtime", w.mesh.airtime},
        {"superframe_length", w.mesh.superframe_length},
        {"slot_duration", w.mesh.slot_duration},
        {"burst_period", w.mesh.burst_period},
        {"positions", positions},
        {"link_quality", quality},
        {"research_jam_channels", w.research_jam_channels},
        {"blacklist",
         {{"enabled", w.blacklist.enabled},
          {"window", w.blacklist.window},
          {"threshold", w.blacklist.threshold},
          {"min_usable", w.blacklist.min_usable},
          {"probe_interval", w.blacklist.probe_interval},
          {"readmit_probes", w.blacklist.readmit_probes}}}}},
      {"setpoint_schedule", setpoints},
      {"jamming_schedule", jams},
      {"stats_windows", windows},
  };
}

ScenarioConfig scenario_from_json(const json& j) {
  check_keys(j, "scenario",
             {"name", "description", "duration", "seeds", "output_path", "step", "geometry", "plant",
              "initial", "sensors", "controller", "safety", "network", "setpoint_schedule",
              "jamming_schedule", "stats_windows"});
  ScenarioConfig c;
  WorldConfig& w = c.world;
  read(j, "name", c.name, "scenario");
  read(j, "description", c.description, "scenario");
  read(j, "duration", c.duration, "scenario");
  read(j, "seeds", c.seeds, "scenario");
  read(j, "output_path", c.output_path, "scenario");
  read(j, "step", w.step, "scenario");
  if (j.contains("geometry")) geometry_from(j.at("geometry"), w.geometry);
  if (j.contains("plant")) params_from(j.at("plant"), w.params);
  if (j.contains("initial")) initial_from(j.at("initial"), w.initial);
  if (j.contains("sensors")) {
    const json& s = j.at("sensors");
    if (!s.is_object()) throw ConfigError("sensors: expected an object");
    for (const auto& [key, val] : s.items()) {
      auto id = sensor_from_string(key);
      if (!id) throw ConfigError("sensors: unknown sensor '" + key + "'");
      const std::string sw = "sensors." + key;
      check_keys(val, sw, {"noise_std", "calibration_bias", "sample_period"});
      auto& spec = w.sensors[static_cast<std::size_t>(*id)];
      spec.id = *id;
      read(val, "noise_std", spec.noise_std, sw);
      read(val, "calibration_bias", spec.calibration_bias, sw);
      read(val, "sample_period", spec.sample_period, sw);
    }
  }
  if (j.contains("controller")) {
    const json& cj = j.at("controller");
    const std::string cw = "controller";
    check_keys(cj, cw, {"period", "stale_after", "water_pv_filter", "oil_pv_filter", "offset_slots",
                        "water", "oil"});
    read(cj, "period", w.controller.period, cw);
    read(cj, "stale_after", w.controller.stale_after, cw);
    read(cj, "water_pv_filter", w.controller.water_pv_filter, cw);
    read(cj, "oil_pv_filter", w.controller.oil_pv_filter, cw);
    read(cj, "offset_slots", w.controller_offset_slots, cw);
    if (cj.contains("water")) pid_from(cj.at("water"), w.water_pid, "controller.water");
    if (cj.contains("oil")) pid_from(cj.at("oil"), w.oil_pid, "controller.oil");
  }
  if (j.contains("safety")) {
    const json& sj = j.at("safety");
    check_keys(sj, "safety", {"level_trip", "feed_pressure_trip", "oil_temp_trip"});
    read(sj, "level_trip", w.safety.level_trip, "safety");
    read(sj, "feed_pressure_trip", w.safety.feed_pressure_trip, "safety");
    read(sj, "oil_temp_trip", w.safety.oil_temp_trip, "safety");
  }
  if (j.contains("network")) {
    const json& nj = j.at("network");
    const std::string nw = "network";
    check_keys(nj, nw, {"p_link", "p_jam", "min_link_quality", "failover_after", "retries_per_hop",
                        "airtime", "superframe_length", "slot_duration", "burst_period", "positions",
                        "link_quality", "research_jam_channels", "blacklist"});
    read(nj, "p_link", w.radio.p_link, nw);
    read(nj, "p_jam", w.radio.p_jam, nw);
    read(nj, "min_link_quality", w.mesh.min_link_quality, nw);
    read(nj, "failover_after", w.mesh.failover_after, nw);
    read(nj, "retries_per_hop", w.mesh.retries_per_hop, nw);
    read(nj, "airtime", w.mesh.airtime, nw);
    read(nj, "superframe_length", w.mesh.superframe_length, nw);
    read(nj, "slot_duration", w.mesh.slot_duration, nw);
    read(nj, "burst_period", w.mesh.burst_period, nw);
    read(nj, "research_jam_channels", w.research_jam_channels, nw);
    if (nj.contains("positions")) {
      const json& pj = nj.at("positions");
      if (!pj.is_array() || pj.size() != kNodeCount)
        throw ConfigError("network.positions: expected 5 [x, y] pairs");
      for (std::size_t i = 0; i < kNodeCount; ++i) {
        if (!pj[i].is_array() || pj[i].size() != 2)
          throw ConfigError("network.positions: expected 5 [x, y] pairs");
        w.positions[i] = {pj[i][0].get<double>(), pj[i][1].get<double>()};
      }
    }
    if (nj.contains("link_quality")) {
      const json& qj = nj.at("link_quality");
      if (!qj.is_array() || qj.size() != kNodeCount)
        throw ConfigError("network.link_quality: expected a 5x5 matrix");
      for (std::size_t r = 0; r < kNodeCount; ++r) {
        if (!qj[r].is_array() || qj[r].size() != kNodeCount)
          throw ConfigError("network.link_quality: expected a 5x5 matrix");
        for (std::size_t col = 0; col < kNodeCount; ++col) w.link_quality[r][col] = qj[r][col].get<double>();
      }
    }
    if (nj.contains("blacklist")) {
      const json& bj = nj.at("blacklist");
      const std::string bw = "network.blacklist";
      check_keys(bj, bw, {"enabled", "window", "threshold", "min_usable", "probe_interval",
                          "readmit_probes"});
      read(bj, "enabled", w.blacklist.enabled, bw);
      read(bj, "window", w.blacklist.window, bw);
      read(bj, "threshold", w.blacklist.threshold, bw);
      read(bj, "min_usable", w.blacklist.min_usable, bw);
      read(bj, "probe_interval", w.blacklist.probe_interval, bw);
      read(bj, "readmit_probes", w.blacklist.readmit_probes, bw);
    }
  }
  if (j.contains("setpoint_schedule")) {
    const json& sj = j.at("setpoint_schedule");
    if (!sj.is_array()) throw ConfigError("setpoint_schedule: expected an array");
    for (const auto& e : sj) {
      const std::string sw = "setpoint_schedule[]";
      check_keys(e, sw, {"time", "loop", "value"});
      SetpointChange ch;
      read(e, "time", ch.time, sw);
      read(e, "value", ch.value, sw);
      std::string loop = "oil";
      read(e, "loop", loop, sw);
      auto l = loop_from_string(loop);
      if (!l) throw ConfigError("setpoint_schedule: unknown loop '" + loop + "'");
      ch.loop = *l;
      c.setpoint_schedule.push_back(ch);
    }
  }
  if (j.contains("jamming_schedule")) {
    const json& jj = j.at("jamming_schedule");
    if (!jj.is_array()) throw ConfigError("jamming_schedule: expected an array");
    for (const auto& e : jj) c.jamming_schedule.push_back(window_from(e, "jamming_schedule[]"));
  }
  if (j.contains("stats_windows")) {
    const json& wj = j.at("stats_windows");
    if (!wj.is_array()) throw ConfigError("stats_windows: expected an array");
    for (const auto& e : wj) {
      const std::string sw = "stats_windows[]";
      check_keys(e, sw, {"label", "start", "end"});
      StatsWindow s;
      read(e, "label", s.label, sw);
      read(e, "start", s.start, sw);
      read(e, "end", s.end, sw);
      c.stats_windows.push_back(s);
    }
  }
  w.controller.params = w.params;
  w.controller.geometry = w.geometry;
  return c;
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return scenario_from_json(j);
}

// ---------------------------------------------------------------------------
// Recipes

ScenarioConfig calibrated_rig() {
  ScenarioConfig c;
  WorldConfig& w = c.world;
  w.sensors = {SensorSpec{SensorId::P1, 0.5, 0.0, 1.0}, SensorSpec{SensorId::P2, 2.0, 0.0, 1.0},
               SensorSpec{SensorId::P3, 8.0, 0.0, 1.0}, SensorSpec{SensorId::T, 0.05, 0.0, 1.0}};
  w.controller.water_pv_filter = 100.0;
  w.controller.oil_pv_filter = 25.0;
  w.controller.params = w.params;
  w.controller.geometry = w.geometry;
  w.initial.pump_running = true;
  w.initial.valve(ValveId::V1) = {100.0, 100.0};
  w.initial.valve(ValveId::V2) = {100.0, 100.0};
  w.initial.valve(ValveId::V3) = {60.0, 60.0};
  c.seeds = five_seeds();
  return c;
}

ScenarioConfig usecase1() {
  ScenarioConfig c = calibrated_rig();
  c.name = "usecase1";
  c.description =
      "Stable process operation: water set-point 40 %, oil set-point 60 %, no interference, "
      "5 runs; water-level overshoots and undershoots over the first waves.";
  c.duration = 1800.0;
  c.stats_windows = {{"baseline_600s", 0.0, 600.0}, {"full", 0.0, 1800.0}};
  c.output_path = "usecase1_report.json";
  return c;
}

ScenarioConfig usecase2() {
  ScenarioConfig c = calibrated_rig();
  c.name = "usecase2";
  c.description =
      "Set-point change: oil set-point changed from 60 % to 40 % after the third oil peak, "
      "5 runs; first feature after the change is an undershoot, then two overshoots.";
  c.duration = 2000.0;
  c.setpoint_schedule = {{kUseCase2StepTime, Loop::Oil, 40.0}};
  c.stats_windows = {{"full", 0.0, 2000.0}};
  c.output_path = "usecase2_report.json";
  return c;
}

ScenarioConfig usecase3() {
  ScenarioConfig c = calibrated_rig();
  c.name = "usecase3";
  c.description =
      "Interference: channels 14, 15, 16, 23, 24 and 25 jammed at full intensity from t = 300 s, "
      "channel blacklisting off, 5 runs; network statistics at 0, 7 and 20 minutes of the jam.";
  const double t0 = kUseCase3JamStart;
  c.duration = t0 + 20.0 * 60.0;
  c.jamming_schedule = {{t0, c.duration, {14, 15, 16, 23, 24, 25}, 1.0}};
  c.world.blacklist.enabled = false;
  c.stats_windows = {{"jam_0min", t0 - kStatsWindow, t0},
                     {"jam_7min", t0 + 7.0 * 60.0 - kStatsWindow, t0 + 7.0 * 60.0},
                     {"jam_20min", t0 + 20.0 * 60.0 - kStatsWindow, t0 + 20.0 * 60.0},
                     {"jammed", t0, t0 + 20.0 * 60.0}};
  c.output_path = "usecase3_report.json";
  return c;
}

std::vector<ScenarioConfig> builtin_recipes() { return {usecase1(), usecase2(), usecase3()}; }

std::optional<ScenarioConfig> find_recipe(const std::string& name) {
  for (auto& r : builtin_recipes())
    if (r.name == name) return r;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Wave detection

std::vector<SetpointSegment> segment_waves(const std::vector<double>& time,
                                           const std::vector<double>& level,
                                           const std::vector<double>& setpoint) {
  if (time.size() != level.size() || time.size() != setpoint.size())
    throw RangeError("segment_waves: series lengths differ");
  std::vector<SetpointSegment> out;
  const std::size_t n = time.size();
  std::size_t a = 0;
  while (a < n) {
    std::size_t b = a + 1;
    while (b < n && setpoint[b] == setpoint[a]) ++b;
    const double sp = setpoint[a];
    SetpointSegment seg;
    seg.start = time[a];
    seg.end = time[b - 1];
    seg.setpoint = sp;

    std::vector<std::size_t> crossings;
    for (std::size_t k = a + 1; k < b; ++k)
      if (level[k - 1] <= sp && sp < level[k]) crossings.push_back(k);

    if (level[a] > sp) {
      const std::size_t stop = crossings.empty() ? b : crossings.front();
      const double low = *std::min_element(level.begin() + static_cast<std::ptrdiff_t>(a),
                                           level.begin() + static_cast<std::ptrdiff_t>(stop));
      seg.leading_undershoot = std::max(0.0, sp - low);
    }

    for (std::size_t i = 0; i + 1 < crossings.size(); ++i) {
      const auto first = level.begin() + static_cast<std::ptrdiff_t>(crossings[i]);
      const auto last = level.begin() + static_cast<std::ptrdiff_t>(crossings[i + 1]);
      const auto peak = std::max_element(first, last);
      const auto trough = std::min_element(peak, last);
      Wave w;
      w.index = static_cast<int>(i) + 1;
      w.start = time[crossings[i]];
      w.end = time[crossings[i + 1]];
      w.setpoint = sp;
      w.peak_level = *peak;
      w.trough_level = *trough;
      w.overshoot = std::max(0.0, *peak - sp);
      w.undershoot = std::max(0.0, sp - *trough);
      seg.waves.push_back(w);
    }
    out.push_back(std::move(seg));
    a = b;
  }
  return out;
}

std::vector<Wave> detect_waves(const std::vector<double>& time, const std::vector<double>& level,
                               const std::vector<double>& setpoint) {
  std::vector<Wave> out;
  for (auto& seg : segment_waves(time, level, setpoint))
    out.insert(out.end(), seg.waves.begin(), seg.waves.end());
  return out;
}

// ---------------------------------------------------------------------------
// Running

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd r;
  r.n = values.size();
  if (values.empty()) return r;
  double sum = 0.0;
  for (double v : values) sum += v;
  r.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return r;
}

RunResult run_single(const ScenarioConfig& config, std::uint64_t seed) {
  RunResult r;
  r.seed = seed;
  WorldConfig wc = config.world;
  wc.seed = seed;
  wc.radio.jamming = config.jamming_schedule;
  SimWorld world = make_world(wc);
  for (std::size_t i = 0; i < config.setpoint_schedule.size(); ++i) {
    const auto& c = config.setpoint_schedule[i];
    OperatorCommand cmd;
    cmd.kind = CommandKind::SetSetpoint;
    cmd.command_id = "schedule-" + std::to_string(i + 1);
    cmd.loop = c.loop;
    cmd.value = c.value;
    cmd.issued_at = c.time;
    schedule(world, world.clock.tick_at_or_after(c.time), EventKind::kOperatorCommand, cmd);
  }

  try {
    run_until(world, config.duration);
  } catch (const SimulationError& e) {
    r.failed = true;
    r.failure = std::string("simulation error at t=") + fmt(world.clock.now(), 2) + ": " + e.what();
  }

  r.trace = std::move(world.trace);
  std::vector<double> t, water, oil, sp_w, sp_o;
  for (const auto& p : r.trace) {
    t.push_back(p.time);
    water.push_back(p.water_level);
    oil.push_back(p.oil_level);
    sp_w.push_back(p.setpoint_water);
    sp_o.push_back(p.setpoint_oil);
  }
  r.water_segments = segment_waves(t, water, sp_w);
  r.oil_segments = segment_waves(t, oil, sp_o);
  r.overall = network_stats(world.network.packets, 0.0, config.duration, wc.step);
  for (const auto& w : config.stats_windows)
    r.windows.push_back({w.label, network_stats(world.network.packets, w.start, w.end, wc.step)});
  r.alarms = world.alarm_log;
  r.commands = world.command_log;
  r.attempts = attempt_trace(world.network.packets);
  r.final_state = world.plant;
  r.conservation_diagnostics = world.conservation_diagnostics;
  for (const auto& a : r.alarms) {
    if (a.trips && !r.failed) {
      r.failed = true;
      r.failure = std::string("safety trip: ") + std::string(to_string(a.kind)) +
                  (a.detail.empty() ? "" : " (" + a.detail + ")") + " at t=" + fmt(a.time, 2) +
                  " value=" + fmt(a.value, 3);
    }
  }
  return r;
}

ScenarioReport run_scenario(const ScenarioConfig& config, unsigned jobs) {
  config.validate();
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  ScenarioReport rep;
  rep.scenario = config.name;
  rep.config = config;
  rep.runs.resize(config.seeds.size());
  for (std::size_t start = 0; start < config.seeds.size(); start += jobs) {
    std::vector<std::future<RunResult>> batch;
    const std::size_t stop = std::min(config.seeds.size(), start + jobs);
    for (std::size_t i = start; i < stop; ++i)
      batch.push_back(std::async(std::launch::async, run_single, std::cref(config), config.seeds[i]));
    for (std::size_t i = start; i < stop; ++i) rep.runs[i] = batch[i - start].get();
  }
  for (const auto& r : rep.runs) {
    if (!r.failed) continue;
    rep.failed = true;
    rep.failures.push_back("seed " + std::to_string(r.seed) + ": " + r.failure);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Aggregation

namespace {

void put(std::map<std::string, double>& m, const std::string& key, const MeanStd& s) {
  m[key + ".mean"] = s.mean;
  m[key + ".std"] = s.std;
}

void segment_metrics(std::map<std::string, double>& m, const std::string& loop,
                     const std::vector<const std::vector<SetpointSegment>*>& per_run) {
  std::size_t max_segments = 0;
  for (const auto* segs : per_run) max_segments = std::max(max_segments, segs->size());
  for (std::size_t s = 0; s < max_segments; ++s) {
    const std::string base = loop + ".seg" + std::to_string(s);
    std::size_t max_waves = 0;
    std::size_t min_waves = std::numeric_limits<std::size_t>::max();
    std::vector<double> leading;
    for (const auto* segs : per_run) {
      const std::size_t count = s < segs->size() ? (*segs)[s].waves.size() : 0;
      max_waves = std::max(max_waves, count);
      min_waves = std::min(min_waves, count);
      if (s < segs->size() && (*segs)[s].leading_undershoot)
        leading.push_back(*(*segs)[s].leading_undershoot);
    }
    m[base + ".waves.min"] = static_cast<double>(min_waves);
    m[base + ".setpoint"] = (*per_run.front()).size() > s ? (*per_run.front())[s].setpoint : 0.0;

    std::vector<MeanStd> over(max_waves), under(max_waves);
    for (std::size_t i = 0; i < max_waves; ++i) {
      std::vector<double> ov, un;
      for (const auto* segs : per_run) {
        if (s >= segs->size() || i >= (*segs)[s].waves.size()) continue;
        ov.push_back((*segs)[s].waves[i].overshoot);
        un.push_back((*segs)[s].waves[i].undershoot);
      }
      over[i] = mean_std(ov);
      under[i] = mean_std(un);
      const std::string wb = base + ".wave" + std::to_string(i + 1);
      put(m, wb + ".overshoot", over[i]);
      put(m, wb + ".undershoot", under[i]);
      m[wb + ".n"] = static_cast<double>(ov.size());
    }
    // Margin of the first overshoot over waves 2-4.
    if (max_waves >= 2) {
      double worst = std::numeric_limits<double>::infinity();
      for (std::size_t i = 1; i < std::min<std::size_t>(max_waves, 4); ++i)
        worst = std::min(worst, over[0].mean - over[i].mean);
      m[base + ".wave1_overshoot_margin"] = worst;
    }
    // Largest increase of mean undershoot from one wave to the next over waves 2-4.
    if (max_waves >= 3) {
      double rise = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 2; i < std::min<std::size_t>(max_waves, 4); ++i)
        rise = std::max(rise, under[i].mean - under[i - 1].mean);
      m[base + ".undershoot_max_rise"] = rise;
    }
    if (!leading.empty()) {
      const MeanStd lead = mean_std(leading);
      put(m, base + ".leading_undershoot", lead);
      if (max_waves >= 2) {
        m[base + ".leading_margin"] = lead.mean - std::max(over[0].mean, over[1].mean);
        m[base + ".overshoot_drop"] = over[0].mean - over[1].mean;
      }
    }
  }
}

void network_metrics(std::map<std::string, double>& m, const std::string& label,
                     const std::vector<const NetworkStats*>& per_run) {
  std::vector<double> stab, rel, lat;
  for (const auto* s : per_run) {
    stab.push_back(s->path_stability_pct);
    rel.push_back(s->reliability_pct);
    if (s->latency_ms_mean) lat.push_back(*s->latency_ms_mean);
  }
  const std::string base = "network." + label;
  put(m, base + ".path_stability", mean_std(stab));
  put(m, base + ".reliability", mean_std(rel));
  m[base + ".reliability.min"] = *std::min_element(rel.begin(), rel.end());
  m[base + ".path_stability.min"] = *std::min_element(stab.begin(), stab.end());
  m[base + ".path_stability.max"] = *std::max_element(stab.begin(), stab.end());
  if (!lat.empty()) put(m, base + ".latency_ms", mean_std(lat));
}

}  // namespace

std::map<std::string, double> ScenarioReport::metrics() const {
  std::map<std::string, double> m;
  if (runs.empty()) return m;
  std::vector<const std::vector<SetpointSegment>*> water, oil;
  std::vector<const NetworkStats*> overall;
  for (const auto& r : runs) {
    water.push_back(&r.water_segments);
    oil.push_back(&r.oil_segments);
    overall.push_back(&r.overall);
  }
  segment_metrics(m, "water", water);
  segment_metrics(m, "oil", oil);
  network_metrics(m, "overall", overall);
  for (std::size_t w = 0; w < runs.front().windows.size(); ++w) {
    std::vector<const NetworkStats*> per;
    for (const auto& r : runs) per.push_back(&r.windows[w].stats);
    network_metrics(m, runs.front().windows[w].label, per);
  }
  // Latency change of each window relative to the first one.
  if (runs.front().windows.size() > 1) {
    const std::string first = "network." + runs.front().windows.front().label + ".latency_ms.mean";
    for (std::size_t w = 1; w < runs.front().windows.size(); ++w) {
      const std::string key = "network." + runs.front().windows[w].label + ".latency_ms.mean";
      if (m.count(first) && m.count(key) && m.at(first) > 0.0)
        m["network." + runs.front().windows[w].label + ".latency_increase_pct"] =
            (m.at(key) / m.at(first) - 1.0) * 100.0;
    }
  }
  double runs_failed = 0.0;
  for (const auto& r : runs) runs_failed += r.failed ? 1.0 : 0.0;
  m["runs"] = static_cast<double>(runs.size());
  m["runs_failed"] = runs_failed;
  return m;
}

// ---------------------------------------------------------------------------
// Persistence

json report_to_json(const ScenarioReport& rep, bool include_series) {
  json runs = json::array();
  for (const auto& r : rep.runs) {
    json water = json::array(), oil = json::array();
    for (const auto& s : r.water_segments) water.push_back(segment_json(s));
    for (const auto& s : r.oil_segments) oil.push_back(segment_json(s));
    json windows = json::array();
    for (const auto& w : r.windows) {
      json s = stats_json(w.stats);
      s["label"] = w.label;
      windows.push_back(s);
    }
    json alarms = json::array();
    for (const auto& a : r.alarms)
      alarms.push_back({{"kind", to_string(a.kind)},
                        {"time", a.time},
                        {"value", a.value},
                        {"trips", a.trips},
                        {"detail", a.detail}});
    json commands = json::array();
    for (const auto& c : r.commands)
      commands.push_back({{"command_id", c.command_id},
                          {"kind", to_string(c.kind)},
                          {"applied_at", c.applied_at},
                          {"accepted", c.accepted},
                          {"reason", c.reason}});
    json run = {{"seed", r.seed},
                {"failed", r.failed},
                {"failure", r.failure},
                {"waves", {{"water", water}, {"oil", oil}}},
                {"network", {{"overall", stats_json(r.overall)}, {"windows", windows}}},
                {"alarms", alarms},
                {"commands", commands},
                {"conservation_diagnostics", r.conservation_diagnostics},
                {"final_state", initial_json(r.final_state)}};
    if (include_series) {
      json series = {{"time_s", json::array()},         {"water_level_pct", json::array()},
                     {"oil_level_pct", json::array()},  {"left_total_pct", json::array()},
                     {"lv1_pct", json::array()},        {"lv2_pct", json::array()},
                     {"setpoint_w", json::array()},     {"setpoint_o", json::array()},
                     {"pump_running", json::array()},   {"alarms", json::array()}};
      for (const auto& p : r.trace) {
        series["time_s"].push_back(p.time);
        series["water_level_pct"].push_back(p.water_level);
        series["oil_level_pct"].push_back(p.oil_level);
        series["left_total_pct"].push_back(p.left_total);
        series["lv1_pct"].push_back(p.lv1);
        series["lv2_pct"].push_back(p.lv2);
        series["setpoint_w"].push_back(p.setpoint_water);
        series["setpoint_o"].push_back(p.setpoint_oil);
        series["pump_running"].push_back(p.pump_running);
        series["alarms"].push_back(p.alarms);
      }
      run["series"] = series;
    }
    runs.push_back(run);
  }
  json metrics = json::object();
  for (const auto& [k, v] : rep.metrics()) metrics[k] = v;
  return {{"scenario", rep.scenario},
          {"failed", rep.failed},
          {"failures", rep.failures},
          {"config", to_json(rep.config)},
          {"metrics", metrics},
          {"runs", runs}};
}

std::map<std::string, double> metrics_from_report_json(const json& j) {
  if (!j.is_object() || !j.contains("metrics") || !j.at("metrics").is_object())
    throw ConfigError("report has no metrics object");
  std::map<std::string, double> m;
  for (const auto& [k, v] : j.at("metrics").items()) {
    if (!v.is_number()) throw ConfigError("report metric '" + k + "' is not a number");
    m[k] = v.get<double>();
  }
  return m;
}

std::string series_csv(const RunResult& run) {
  std::ostringstream out;
  out << "time_s,water_level_pct,oil_level_pct,lv1_pct,lv2_pct,setpoint_w,setpoint_o,alarms\n";
  for (const auto& p : run.trace)
    out << fmt(p.time, 2) << ',' << fmt(p.water_level) << ',' << fmt(p.oil_level) << ','
        << fmt(p.lv1) << ',' << fmt(p.lv2) << ',' << fmt(p.setpoint_water, 3) << ','
        << fmt(p.setpoint_oil, 3) << ',' << p.alarms << '\n';
  return out.str();
}

std::string attempts_csv(const RunResult& run) {
  std::ostringstream out;
  out << "seq,origin,created_at,asn,channel,from,to,acked\n";
  for (const auto& a : run.attempts)
    out << a.seq << ',' << to_string(a.origin) << ',' << fmt(a.created_at, 2) << ',' << a.asn << ','
        << a.channel << ',' << to_string(a.from) << ',' << to_string(a.to) << ','
        << (a.acked ? 1 : 0) << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Reference comparison

ReferenceTable reference_from_json(const json& j) {
  check_keys(j, "reference", {"name", "description", "rows"});
  ReferenceTable t;
  read(j, "name", t.name, "reference");
  read(j, "description", t.description, "reference");
  if (!j.contains("rows") || !j.at("rows").is_array())
    throw ConfigError("reference: rows must be an array");
  for (const auto& r : j.at("rows")) {
    check_keys(r, "reference.rows[]", {"metric", "reference", "tolerance", "comparison", "source"});
    ReferenceRow row;
    read(r, "metric", row.metric, "reference.rows[]");
    read(r, "reference", row.reference, "reference.rows[]");
    read(r, "tolerance", row.tolerance, "reference.rows[]");
    read(r, "source", row.source, "reference.rows[]");
    std::string cmp = "within";
    read(r, "comparison", cmp, "reference.rows[]");
    if (cmp == "within") row.comparison = Comparison::Within;
    else if (cmp == "at_most") row.comparison = Comparison::AtMost;
    else if (cmp == "at_least") row.comparison = Comparison::AtLeast;
    else if (cmp == "info") row.comparison = Comparison::Info;
    else throw ConfigError("reference: comparison must be within, at_most, at_least or info");
    if (row.metric.empty()) throw ConfigError("reference: row without metric");
    if (!(row.tolerance >= 0.0)) throw ConfigError("reference: tolerance must be >= 0");
    t.rows.push_back(row);
  }
  return t;
}

ReferenceTable load_reference(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read reference table '" + path + "'");
  try {
    return reference_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("reference table '" + path + "' is not valid JSON: " + e.what());
  }
}

ComparisonVerdict compare_to_reference(const std::map<std::string, double>& metrics,
                                       const ReferenceTable& reference) {
  ComparisonVerdict v;
  std::ostringstream diff;
  for (const auto& row : reference.rows) {
    auto it = metrics.find(row.metric);
    if (it == metrics.end()) throw ComparisonError("metric missing from report: " + row.metric);
    RowVerdict rv;
    rv.row = row;
    rv.value = it->second;
    std::string bound;
    double excess = 0.0;
    switch (row.comparison) {
      case Comparison::Within:
        excess = std::abs(rv.value - row.reference) - row.tolerance;
        bound = "reference=" + fmt(row.reference, 4) + " tol=+/-" + fmt(row.tolerance, 4);
        break;
      case Comparison::AtMost:
        excess = rv.value - (row.reference + row.tolerance);
        bound = "limit<=" + fmt(row.reference + row.tolerance, 4);
        break;
      case Comparison::AtLeast:
        excess = (row.reference - row.tolerance) - rv.value;
        bound = "limit>=" + fmt(row.reference - row.tolerance, 4);
        break;
      case Comparison::Info:
        bound = "reference=" + fmt(row.reference, 4);
        break;
    }
    const bool info = row.comparison == Comparison::Info;
    rv.pass = info || (std::isfinite(rv.value) && excess <= 1e-12);
    rv.line = std::string(info ? "INFO " : rv.pass ? "PASS " : "FAIL ") + row.metric + " value=" + fmt(rv.value, 4) +
              " " + bound + " diff=" + (rv.value >= row.reference ? "+" : "") +
              fmt(rv.value - row.reference, 4) + (row.source.empty() ? "" : " [" + row.source + "]");
    v.pass = v.pass && rv.pass;
    diff << rv.line << '\n';
    v.rows.push_back(std::move(rv));
  }
  v.diff = diff.str();
  return v;
}

}  // namespace separator
