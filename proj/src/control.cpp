#include "separator/control.hpp"

#include <algorithm>
#include <cmath>

namespace separator {

namespace {

double integral_term(const PidController& pid, double acc) {
  if (!pid.integral_enabled()) return 0.0;
  if (pid.mode == IntegralMode::TimeSeconds) return pid.kp * acc / pid.ti;
  return pid.ti * acc;
}

}  // namespace

PidStep pid_step(PidController pid, double measurement, double dt) {
  if (!(dt > 0.0)) throw RangeError("pid_step: dt must be > 0");
  if (!std::isfinite(measurement)) return {pid, pid.last_output, true};

  const double e = measurement - pid.setpoint;
  const double candidate = pid.integral_acc + e * dt;
  double u = pid.kp * e + integral_term(pid, candidate);
  const bool high = u > pid.out_max && e > 0.0;
  const bool low = u < pid.out_min && e < 0.0;
  if (!pid.integral_enabled()) {
    u = pid.kp * e;
  } else if (!high && !low) {
    pid.integral_acc = candidate;
  } else {
    // Integrate only up to the accumulator value that puts the output on the
    // limit; never past it.
    const double limit = high ? pid.out_max : pid.out_min;
    const double gain = pid.mode == IntegralMode::TimeSeconds ? pid.kp / pid.ti : pid.ti;
    const double at_limit = (limit - pid.kp * e) / gain;
    if ((high && at_limit > pid.integral_acc) || (low && at_limit < pid.integral_acc)) {
      pid.integral_acc = at_limit;
      u = limit;
    } else {
      u = pid.kp * e + integral_term(pid, pid.integral_acc);
    }
  }
  pid.last_output = std::clamp(u, pid.out_min, pid.out_max);
  return {pid, pid.last_output, false};
}

LevelEstimate level_from_dp(double pressure_pa, const PlantParams& params,
                            const TankGeometry& geometry, FluidChannel which) {
  if (!(params.rho_oil > 0.0) || (which == FluidChannel::Water && !(params.rho_water > params.rho_oil)))
    throw RangeError("level_from_dp: densities must be positive and distinct");
  LevelEstimate est;
  if (pressure_pa < 0.0) {
    est.clamped = true;
    return est;
  }
  const double density =
      which == FluidChannel::Water ? params.rho_water - params.rho_oil : params.rho_oil;
  const double height = pressure_pa / (params.gravity * density);
  est.percent = height / geometry.tank_height * 100.0;
  return est;
}

LevelEstimate left_total_from_p2(double dp_pa, double bottom_pa, const PlantParams& params,
                                 const TankGeometry& geometry) {
  const LevelEstimate water = level_from_dp(dp_pa, params, geometry, FluidChannel::Water);
  const double h_w = water.percent / 100.0 * geometry.tank_height;
  const double above = bottom_pa - params.gravity * params.rho_water * h_w;
  LevelEstimate est;
  est.clamped = water.clamped || above < 0.0;
  const double h_o = std::max(0.0, above) / (params.gravity * params.rho_oil);
  est.percent = (h_w + h_o) / geometry.tank_height * 100.0;
  return est;
}

bool GatewayCache::update(const SensorReading& reading, double origin_time, double arrival_time) {
  CacheEntry& e = entries_[static_cast<std::size_t>(reading.id)];
  if (e.valid && origin_time < e.origin_time) return false;
  e.reading = reading;
  e.origin_time = origin_time;
  e.arrival_time = std::max(arrival_time, e.valid ? e.arrival_time : arrival_time);
  e.valid = true;
  return true;
}

std::string_view to_string(AlarmKind kind) {
  switch (kind) {
    case AlarmKind::OverPressure: return "over_pressure";
    case AlarmKind::OverTemperature: return "over_temperature";
    case AlarmKind::HighWaterLevel: return "high_water_level";
    case AlarmKind::HighLeftTotalLevel: return "high_left_total_level";
    case AlarmKind::HighOilLevel: return "high_oil_level";
    case AlarmKind::StaleData: return "stale_data";
    case AlarmKind::DataQuality: return "data_quality";
    case AlarmKind::EmergencyStop: return "emergency_stop";
  }
  return "unknown";
}

ProcessView decode_cache(const GatewayCache& cache, const ControllerConfig& config) {
  ProcessView v;
  if (const auto& p2 = cache.entry(SensorId::P2); p2.valid) {
    const auto w = level_from_dp(p2.reading.value, config.params, config.geometry,
                                 FluidChannel::Water);
    const auto t = left_total_from_p2(p2.reading.value, p2.reading.secondary, config.params,
                                      config.geometry);
    v.water_level = w.percent;
    v.left_total_level = t.percent;
    v.clamped = v.clamped || w.clamped;
  }
  if (const auto& p3 = cache.entry(SensorId::P3); p3.valid) {
    const auto o = level_from_dp(p3.reading.value, config.params, config.geometry,
                                 FluidChannel::Oil);
    v.oil_level = o.percent;
    v.clamped = v.clamped || o.clamped;
  }
  if (const auto& p1 = cache.entry(SensorId::P1); p1.valid) v.feed_pressure = p1.reading.value;
  if (const auto& t = cache.entry(SensorId::T); t.valid) v.oil_temp = t.reading.value;
  return v;
}

std::vector<AlarmEvent> alarm_eval(const GatewayCache& cache, SafetyConfig& safety,
                                   const ControllerConfig& config, double now) {
  // Tolerates the rounding of a level converted back and forth through pressure.
  constexpr double kLevelSlack = 1e-9;
  const ProcessView v = decode_cache(cache, config);
  std::vector<AlarmEvent> alarms;
  auto trip = [&](AlarmKind kind, double value, const char* detail) {
    alarms.push_back({kind, now, value, true, detail});
  };
  if (v.feed_pressure && *v.feed_pressure > safety.feed_pressure_trip)
    trip(AlarmKind::OverPressure, *v.feed_pressure, "P1");
  if (v.oil_temp && *v.oil_temp > safety.oil_temp_trip)
    trip(AlarmKind::OverTemperature, *v.oil_temp, "T");
  if (v.water_level && *v.water_level >= safety.level_trip - kLevelSlack)
    trip(AlarmKind::HighWaterLevel, *v.water_level, "P2");
  if (v.left_total_level && *v.left_total_level >= safety.level_trip - kLevelSlack)
    trip(AlarmKind::HighLeftTotalLevel, *v.left_total_level, "P2");
  if (v.oil_level && *v.oil_level >= safety.level_trip - kLevelSlack)
    trip(AlarmKind::HighOilLevel, *v.oil_level, "P3");
  if (!alarms.empty()) safety.latched = true;
  return alarms;
}

namespace {

bool fresh(const GatewayCache& cache, SensorId id, const ControllerConfig& config, double now) {
  const auto& e = cache.entry(id);
  return e.valid && now - e.origin_time <= config.stale_after;
}

double filtered(std::optional<double>& pv, double level, double tau, double period) {
  if (tau <= 0.0 || !pv) {
    pv = level;
  } else {
    const double a = std::exp(-period / tau);
    pv = a * *pv + (1.0 - a) * level;
  }
  return *pv;
}

std::string alarm_key(const AlarmEvent& a) {
  return std::string(to_string(a.kind)) + "/" + a.detail;
}

}  // namespace

ActuatorCommands controller_cycle(const GatewayCache& cache, ControllerState& state,
                                  const ControllerConfig& config, double now) {
  ActuatorCommands cmd;
  std::vector<AlarmEvent> raised = alarm_eval(cache, state.safety, config, now);
  const ProcessView view = decode_cache(cache, config);
  if (view.clamped) raised.push_back({AlarmKind::DataQuality, now, 0.0, false, "negative dp"});

  const bool water_fresh = fresh(cache, SensorId::P2, config, now);
  const bool oil_fresh = fresh(cache, SensorId::P3, config, now);
  if (!water_fresh) raised.push_back({AlarmKind::StaleData, now, 0.0, false, "P2"});
  if (!oil_fresh) raised.push_back({AlarmKind::StaleData, now, 0.0, false, "P3"});

  if (!state.safety.latched) {
    if (state.water_manual) {
      state.lv1_command = *state.water_manual;
    } else if (water_fresh) {
      const double pv = filtered(state.water_pv, *view.water_level, config.water_pv_filter,
                                 config.period);
      const PidStep r = pid_step(state.water, pv, config.period);
      state.water = r.pid;
      if (r.data_quality_alarm)
        raised.push_back({AlarmKind::DataQuality, now, 0.0, false, "water"});
      state.lv1_command = r.output;
    } else {
      cmd.water_held = true;
    }

    if (state.oil_manual) {
      state.lv2_command = *state.oil_manual;
    } else if (oil_fresh) {
      const double pv = filtered(state.oil_pv, *view.oil_level, config.oil_pv_filter,
                                 config.period);
      const PidStep r = pid_step(state.oil, pv, config.period);
      state.oil = r.pid;
      if (r.data_quality_alarm) raised.push_back({AlarmKind::DataQuality, now, 0.0, false, "oil"});
      state.lv2_command = r.output;
    } else {
      cmd.oil_held = true;
    }
  } else {
    cmd.stop_pump = true;
    cmd.water_held = true;
    cmd.oil_held = true;
  }

  cmd.lv1 = state.lv1_command;
  cmd.lv2 = state.lv2_command;

  std::vector<std::string> keys;
  for (const auto& a : raised) {
    std::string key = alarm_key(a);
    if (std::find(state.active_alarms.begin(), state.active_alarms.end(), key) ==
        state.active_alarms.end())
      cmd.alarms.push_back(a);
    keys.push_back(std::move(key));
  }
  state.active_alarms = std::move(keys);
  return cmd;
}

}  // namespace separator
