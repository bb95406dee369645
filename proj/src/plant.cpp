#include "separator/plant.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace separator {

void TankGeometry::validate() const {
  if (!(left_area > 0.0) || !(right_area > 0.0) || !(tank_height > 0.0))
    throw ConfigError("geometry: areas and tank_height must be > 0");
  if (!(weir_height_frac > 0.0 && weir_height_frac < 0.8))
    throw ConfigError("geometry: weir_height_frac must lie in (0, 0.8)");
  if (!(feed_capacity_water >= 0.0) || !(feed_capacity_oil >= 0.0))
    throw ConfigError("geometry: feed capacities must be >= 0");
}

void PlantParams::validate() const {
  if (!(gravity > 0.0)) throw ConfigError("plant: gravity must be > 0");
  if (!(rho_water > 0.0) || !(rho_oil > 0.0)) throw ConfigError("plant: densities must be > 0");
  if (!(rho_water > rho_oil)) throw ConfigError("plant: rho_water must exceed rho_oil");
  if (!(water_fraction >= 0.0 && water_fraction <= 1.0))
    throw ConfigError("plant: water_fraction must lie in [0, 1]");
  if (!(q_pump_max >= 0.0) || !(k_sep >= 0.0) || !(cv_water >= 0.0) || !(cv_oil >= 0.0) ||
      !(c_weir >= 0.0))
    throw ConfigError("plant: flow coefficients must be >= 0");
}

void SensorSpec::validate() const {
  if (!(noise_std >= 0.0)) throw ConfigError("sensor: noise_std must be >= 0");
  if (!(sample_period > 0.0)) throw ConfigError("sensor: sample_period must be > 0");
  if (!std::isfinite(calibration_bias)) throw ConfigError("sensor: calibration_bias not finite");
}

ValveActuator valve_slew(ValveActuator actuator, double dt) {
  if (!(dt > 0.0)) throw RangeError("valve_slew: dt must be > 0");
  if (!(actuator.command >= 0.0 && actuator.command <= 100.0))
    throw RangeError("valve command outside [0, 100]");
  const double gap = actuator.command - actuator.position;
  const double max_move = ValveActuator::kSlewRate * dt;
  if (std::abs(gap) <= max_move) {
    actuator.position = actuator.command;
  } else {
    actuator.position += gap > 0.0 ? max_move : -max_move;
  }
  actuator.position = std::clamp(actuator.position, 0.0, 100.0);
  return actuator;
}

bool PlantState::all_finite() const {
  const double values[] = {left_water_vol, left_oil_vol,   left_unsep_water, left_unsep_oil,
                           right_oil_vol,  feed_water_vol, feed_oil_vol,     oil_temp,
                           feedline_pressure};
  for (double v : values)
    if (!std::isfinite(v)) return false;
  for (const auto& v : valves)
    if (!std::isfinite(v.position) || !std::isfinite(v.command)) return false;
  return true;
}

std::string PlantState::dump() const {
  std::ostringstream os;
  os.precision(17);
  os << "left_water=" << left_water_vol << " left_oil=" << left_oil_vol
     << " unsep_water=" << left_unsep_water << " unsep_oil=" << left_unsep_oil
     << " right_oil=" << right_oil_vol << " feed_water=" << feed_water_vol
     << " feed_oil=" << feed_oil_vol << " pump=" << pump_running << " temp=" << oil_temp
     << " p_feed=" << feedline_pressure;
  for (ValveId id : kAllValves)
    os << ' ' << to_string(id) << '=' << valve(id).position << '/' << valve(id).command;
  return os.str();
}

double left_water_height(const PlantState& s, const TankGeometry& g) {
  return s.left_water_vol / (g.left_area * 1000.0);
}
double left_total_height(const PlantState& s, const TankGeometry& g) {
  return s.left_total_vol() / (g.left_area * 1000.0);
}
double right_oil_height(const PlantState& s, const TankGeometry& g) {
  return s.right_oil_vol / (g.right_area * 1000.0);
}

double level_percent(const PlantState& s, const TankGeometry& g, LevelKind which) {
  switch (which) {
    case LevelKind::LeftWater: return left_water_height(s, g) / g.tank_height * 100.0;
    case LevelKind::LeftTotal: return left_total_height(s, g) / g.tank_height * 100.0;
    case LevelKind::RightOil: return right_oil_height(s, g) / g.tank_height * 100.0;
  }
  return 0.0;
}

double volume_for_level(const TankGeometry& g, LevelKind which, double percent) {
  const double area = which == LevelKind::RightOil ? g.right_area : g.left_area;
  return area * g.tank_height * 1000.0 * percent / 100.0;
}

namespace {

void clamp_nonnegative(double& v, const char* name, std::vector<ConservationDiagnostic>& diags) {
  if (v < 0.0) {
    diags.push_back({name, -v});
    v = 0.0;
  }
}

}  // namespace

StepResult step_plant(const PlantState& state, const TankGeometry& g, const PlantParams& p,
                      double dt) {
  if (!state.all_finite())
    throw SimulationError("plant state non-finite before step", state.dump());
  StepResult out{state, {}};
  PlantState& s = out.state;
  const double left_cap = g.left_capacity();
  const double right_cap = g.right_capacity();

  // Pump inflow, split by the feed valves and limited by inventory and headroom.
  if (s.pump_running) {
    const double q_in = p.q_pump_max * s.valve(ValveId::V3).position / 100.0;
    double w_in = q_in * p.water_fraction * s.valve(ValveId::V1).position / 100.0 * dt;
    double o_in = q_in * (1.0 - p.water_fraction) * s.valve(ValveId::V2).position / 100.0 * dt;
    w_in = std::min(w_in, s.feed_water_vol);
    o_in = std::min(o_in, s.feed_oil_vol);
    const double headroom = std::max(0.0, left_cap - s.left_total_vol());
    if (w_in + o_in > headroom) {
      const double scale = headroom / (w_in + o_in);
      w_in *= scale;
      o_in *= scale;
    }
    s.feed_water_vol -= w_in;
    s.feed_oil_vol -= o_in;
    s.left_unsep_water += w_in;
    s.left_unsep_oil += o_in;
  }

  // First-order separation of the mixture into layers.
  const double sep = std::min(1.0, p.k_sep * dt);
  const double dw = s.left_unsep_water * sep;
  const double d_o = s.left_unsep_oil * sep;
  s.left_unsep_water -= dw;
  s.left_unsep_oil -= d_o;
  s.left_water_vol += dw;
  s.left_oil_vol += d_o;

  // Linear overflow of the oil layer above the plate.
  const double head_over = left_total_height(s, g) - g.weir_height();
  if (head_over > 0.0) {
    double over = p.c_weir * head_over * dt;
    over = std::min({over, s.left_oil_vol, std::max(0.0, right_cap - s.right_oil_vol)});
    s.left_oil_vol -= over;
    s.right_oil_vol += over;
  }

  // Orifice drains back to the feed tank.
  const double h_w = std::max(left_water_height(s, g), 0.0);
  double q1 = p.cv_water * s.valve(ValveId::LV1).position / 100.0 * std::sqrt(h_w) * dt;
  q1 = std::min(q1, s.left_water_vol);
  s.left_water_vol -= q1;
  s.feed_water_vol += q1;

  const double h_o = std::max(right_oil_height(s, g), 0.0);
  double q2 = p.cv_oil * s.valve(ValveId::LV2).position / 100.0 * std::sqrt(h_o) * dt;
  q2 = std::min(q2, s.right_oil_vol);
  s.right_oil_vol -= q2;
  s.feed_oil_vol += q2;

  for (auto& v : s.valves) v = valve_slew(v, dt);

  const double heating = s.pump_running ? p.pump_heating : 0.0;
  s.oil_temp += (heating - p.temp_relax * (s.oil_temp - p.ambient_temp)) * dt;
  if (s.pump_running) {
    const double v3 = s.valve(ValveId::V3).position / 100.0;
    s.feedline_pressure = p.static_pressure + p.pump_head * (1.0 + p.restriction_gain * (1.0 - v3));
  } else {
    s.feedline_pressure = p.static_pressure;
  }

  clamp_nonnegative(s.left_water_vol, "left_water_vol", out.diagnostics);
  clamp_nonnegative(s.left_oil_vol, "left_oil_vol", out.diagnostics);
  clamp_nonnegative(s.left_unsep_water, "left_unsep_water", out.diagnostics);
  clamp_nonnegative(s.left_unsep_oil, "left_unsep_oil", out.diagnostics);
  clamp_nonnegative(s.right_oil_vol, "right_oil_vol", out.diagnostics);
  clamp_nonnegative(s.feed_water_vol, "feed_water_vol", out.diagnostics);
  clamp_nonnegative(s.feed_oil_vol, "feed_oil_vol", out.diagnostics);

  if (!s.all_finite()) throw SimulationError("plant state non-finite after step", s.dump());
  return out;
}

double sensor_truth(const PlantState& s, const TankGeometry& g, const PlantParams& p,
                    SensorId id) {
  switch (id) {
    case SensorId::P1: return s.feedline_pressure;
    case SensorId::P2: return p.gravity * (p.rho_water - p.rho_oil) * left_water_height(s, g);
    case SensorId::P3: return p.gravity * p.rho_oil * right_oil_height(s, g);
    case SensorId::T: return s.oil_temp;
  }
  return 0.0;
}

SensorReading read_sensor(const PlantState& s, const TankGeometry& g, const PlantParams& p,
                          const SensorSpec& spec, RngStream& rng) {
  SensorReading r;
  r.id = spec.id;
  const double noise = spec.noise_std > 0.0 ? rng.normal(0.0, spec.noise_std) : 0.0;
  r.value = sensor_truth(s, g, p, spec.id) + spec.calibration_bias + noise;
  if (spec.id == SensorId::P2) {
    const double water = s.left_water_vol + s.left_unsep_water;
    const double oil = s.left_oil_vol + s.left_unsep_oil;
    const double mass_per_area = (p.rho_water * water + p.rho_oil * oil) / (g.left_area * 1000.0);
    r.secondary = p.gravity * mass_per_area + spec.calibration_bias + noise;
  }
  return r;
}

}  // namespace separator
