#include <cmath>
#include <limits>

#include "doctest.h"
#include "separator/control.hpp"

using namespace separator;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

SensorReading reading(SensorId id, double value, double secondary = 0.0) {
  SensorReading r;
  r.id = id;
  r.value = value;
  r.secondary = secondary;
  return r;
}

/// Noiseless P2 reading for a left compartment holding separated layers.
SensorReading p2_for(double water_pct, double oil_pct, const ControllerConfig& c) {
  PlantState s;
  s.left_water_vol = volume_for_level(c.geometry, LevelKind::LeftWater, water_pct);
  s.left_oil_vol = volume_for_level(c.geometry, LevelKind::LeftWater, oil_pct);
  RngStream rng(1, "unused");
  return read_sensor(s, c.geometry, c.params, SensorSpec{SensorId::P2, 0.0, 0.0, 1.0}, rng);
}

SensorReading p3_for(double oil_pct, const ControllerConfig& c) {
  PlantState s;
  s.right_oil_vol = volume_for_level(c.geometry, LevelKind::RightOil, oil_pct);
  RngStream rng(1, "unused");
  return read_sensor(s, c.geometry, c.params, SensorSpec{SensorId::P3, 0.0, 0.0, 1.0}, rng);
}

GatewayCache nominal_cache(const ControllerConfig& c, double t, double water = 40.0,
                           double oil = 60.0) {
  GatewayCache cache;
  cache.update(p2_for(water, 20.0, c), t, t);
  cache.update(p3_for(oil, c), t, t);
  cache.update(reading(SensorId::P1, 161.0), t, t);
  cache.update(reading(SensorId::T, 22.0), t, t);
  return cache;
}

ControllerState paper_gains() {
  ControllerState st;
  st.water = PidController{.kp = 1.4, .ti = 80.0, .setpoint = 40.0};
  st.oil = PidController{.kp = 2.0, .ti = 40.0, .setpoint = 60.0};
  return st;
}

}  // namespace

TEST_CASE("zero error with an empty integral gives zero output") {
  PidController pid{.kp = 1.4, .ti = 80.0, .setpoint = 40.0};
  const PidStep r = pid_step(pid, 40.0, 1.0);
  CHECK(r.output == 0.0);
  CHECK(r.pid.integral_acc == 0.0);
  CHECK_FALSE(r.data_quality_alarm);
}

TEST_CASE("proportional-only law") {
  PidController pid{.kp = 2.0, .ti = kInf, .setpoint = 50.0};
  CHECK(pid_step(pid, 60.0, 1.0).output == doctest::Approx(20.0).epsilon(1e-12));
  pid.ti = 0.0;
  CHECK(pid_step(pid, 60.0, 1.0).output == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(pid_step(pid, 60.0, 1.0).pid.integral_acc == 0.0);
}

TEST_CASE("integral of a constant error over Ti equals the proportional part") {
  PidController pid{.kp = 1.4, .ti = 80.0, .setpoint = 40.0};
  double out = 0.0;
  for (int i = 0; i < 80; ++i) {
    const PidStep r = pid_step(pid, 45.0, 1.0);
    pid = r.pid;
    out = r.output;
  }
  CHECK(pid.integral_acc == doctest::Approx(400.0).epsilon(1e-12));
  CHECK(out == doctest::Approx(1.4 * (5.0 + 400.0 / 80.0)).epsilon(1e-12));
  CHECK(out == doctest::Approx(14.0).epsilon(1e-12));
}

TEST_CASE("integral gain interpretation") {
  PidController pid{.kp = 1.4, .ti = 0.5, .setpoint = 40.0};
  pid.mode = IntegralMode::GainPerSecond;
  const PidStep r = pid_step(pid, 45.0, 2.0);
  CHECK(r.output == doctest::Approx(1.4 * 5.0 + 0.5 * 10.0).epsilon(1e-12));
}

TEST_CASE("output is clamped and the integral frozen while saturated") {
  PidController pid{.kp = 1.4, .ti = 80.0, .setpoint = 40.0};
  int saturated_steps = 0;
  for (int i = 0; i < 200; ++i) {
    const double before = pid.integral_acc;
    const bool was_saturated = pid.last_output == pid.out_max;
    const PidStep r = pid_step(pid, 40.0 + 30.0, 1.0);
    CHECK(r.output <= pid.out_max);
    CHECK(r.output >= pid.out_min);
    if (was_saturated) {
      CHECK(r.pid.integral_acc <= before);
      ++saturated_steps;
    }
    pid = r.pid;
  }
  CHECK(saturated_steps > 50);
  // The accumulator stops where the output meets the limit.
  CHECK(1.4 * 30.0 + 1.4 * pid.integral_acc / 80.0 == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(pid_step(pid, 70.0, 1.0).output == doctest::Approx(100.0).epsilon(1e-12));

  PidController low{.kp = 1.4, .ti = 80.0, .setpoint = 40.0};
  for (int i = 0; i < 200; ++i) {
    const double before = low.integral_acc;
    const PidStep r = pid_step(low, 10.0, 1.0);
    CHECK(r.output == 0.0);
    CHECK(r.pid.integral_acc >= before);
    low = r.pid;
  }
  CHECK(low.integral_acc == 0.0);
}

TEST_CASE("integral recovers as soon as the error reverses") {
  PidController pid{.kp = 1.4, .ti = 80.0, .setpoint = 40.0};
  for (int i = 0; i < 100; ++i) pid = pid_step(pid, 41.0, 1.0).pid;
  const double acc = pid.integral_acc;
  pid = pid_step(pid, 39.0, 1.0).pid;
  CHECK(pid.integral_acc == doctest::Approx(acc - 1.0));
}

TEST_CASE("non-finite measurement holds the last output and raises data quality") {
  PidController pid{.kp = 1.4, .ti = 80.0, .setpoint = 40.0};
  pid = pid_step(pid, 50.0, 1.0).pid;
  const double held = pid.last_output;
  for (double bad : {std::nan(""), kInf, -kInf}) {
    const PidStep r = pid_step(pid, bad, 1.0);
    CHECK(r.data_quality_alarm);
    CHECK(r.output == held);
    CHECK(r.pid.integral_acc == pid.integral_acc);
  }
}

TEST_CASE("level from differential pressure") {
  const PlantParams p;
  const TankGeometry g;
  CHECK(level_from_dp(0.0, p, g, FluidChannel::Water).percent == 0.0);
  CHECK(level_from_dp(408.1, p, g, FluidChannel::Water).percent == doctest::Approx(40.0).epsilon(1e-3));
  CHECK(level_from_dp(9.81 * 208.0 * 0.2, p, g, FluidChannel::Water).percent ==
        doctest::Approx(40.0).epsilon(1e-12));
  CHECK(level_from_dp(2325.0, p, g, FluidChannel::Oil).percent == doctest::Approx(60.0).epsilon(1e-3));
  const LevelEstimate neg = level_from_dp(-12.0, p, g, FluidChannel::Water);
  CHECK(neg.percent == 0.0);
  CHECK(neg.clamped);
}

TEST_CASE("level, pressure and back again agree within 1e-9") {
  const TankGeometry g;
  const PlantParams p;
  RngStream rng(1, "unused");
  for (double pct = 0.0; pct <= 100.0; pct += 0.37) {
    PlantState s;
    s.left_water_vol = volume_for_level(g, LevelKind::LeftWater, pct);
    s.right_oil_vol = volume_for_level(g, LevelKind::RightOil, pct);
    const double w = level_percent(s, g, LevelKind::LeftWater);
    const double o = level_percent(s, g, LevelKind::RightOil);
    const auto r2 = read_sensor(s, g, p, SensorSpec{SensorId::P2, 0.0, 0.0, 1.0}, rng);
    const auto r3 = read_sensor(s, g, p, SensorSpec{SensorId::P3, 0.0, 0.0, 1.0}, rng);
    CHECK(std::abs(level_from_dp(r2.value, p, g, FluidChannel::Water).percent - w) < 1e-9);
    CHECK(std::abs(level_from_dp(r3.value, p, g, FluidChannel::Oil).percent - o) < 1e-9);
  }
}

TEST_CASE("left total level from the P2 pressures") {
  ControllerConfig c;
  const SensorReading r = p2_for(35.0, 25.0, c);
  const LevelEstimate total = left_total_from_p2(r.value, r.secondary, c.params, c.geometry);
  CHECK(total.percent == doctest::Approx(60.0).epsilon(1e-9));
  CHECK_FALSE(total.clamped);
}

TEST_CASE("nominal readings raise no alarm") {
  ControllerConfig c;
  SafetyConfig safety;
  CHECK(alarm_eval(nominal_cache(c, 0.0), safety, c).empty());
  CHECK_FALSE(safety.latched);
}

TEST_CASE("over-temperature trips and stops the pump") {
  ControllerConfig c;
  GatewayCache cache = nominal_cache(c, 10.0);
  cache.update(reading(SensorId::T, 46.0), 10.0, 10.0);
  ControllerState st = paper_gains();
  const ActuatorCommands cmd = controller_cycle(cache, st, c, 10.0);
  CHECK(cmd.stop_pump);
  CHECK(st.safety.latched);
  REQUIRE(cmd.alarms.size() == 1);
  CHECK(cmd.alarms[0].kind == AlarmKind::OverTemperature);
  CHECK(cmd.alarms[0].trips);
}

TEST_CASE("two simultaneous trips give both alarms and one latch") {
  ControllerConfig c;
  GatewayCache cache = nominal_cache(c, 0.0);
  cache.update(reading(SensorId::T, 50.0), 0.0, 0.0);
  cache.update(reading(SensorId::P1, 300.0), 0.0, 0.0);
  SafetyConfig safety;
  const auto alarms = alarm_eval(cache, safety, c);
  CHECK(alarms.size() == 2);
  CHECK(safety.latched);
  SafetyConfig again = safety;
  alarm_eval(cache, again, c);
  CHECK(again.latched);
}

TEST_CASE("left total at 81 percent stops the pump in the same cycle") {
  ControllerConfig c;
  GatewayCache cache;
  cache.update(p2_for(40.0, 41.0, c), 5.0, 5.0);
  cache.update(p3_for(60.0, c), 5.0, 5.0);
  ControllerState st = paper_gains();
  const ActuatorCommands cmd = controller_cycle(cache, st, c, 5.0);
  CHECK(cmd.stop_pump);
  CHECK(st.safety.latched);
  bool saw = false;
  for (const auto& a : cmd.alarms) saw = saw || a.kind == AlarmKind::HighLeftTotalLevel;
  CHECK(saw);
}

TEST_CASE("a level exactly at the trip threshold trips") {
  ControllerConfig c;
  GatewayCache cache;
  cache.update(p2_for(40.0, 40.0, c), 0.0, 0.0);
  SafetyConfig safety;
  CHECK_FALSE(alarm_eval(cache, safety, c).empty());
  CHECK(safety.latched);
}

TEST_CASE("the latch persists after the condition clears") {
  ControllerConfig c;
  ControllerState st = paper_gains();
  GatewayCache high;
  high.update(p2_for(40.0, 45.0, c), 0.0, 0.0);
  high.update(p3_for(60.0, c), 0.0, 0.0);
  CHECK(controller_cycle(high, st, c, 0.0).stop_pump);
  for (int k = 1; k <= 50; ++k) {
    const double t = k;
    const ActuatorCommands cmd = controller_cycle(nominal_cache(c, t, 30.0, 50.0), st, c, t);
    CHECK(cmd.stop_pump);
    CHECK(st.safety.latched);
  }
  st.safety.latched = false;
  CHECK_FALSE(controller_cycle(nominal_cache(c, 51.0), st, c, 51.0).stop_pump);
}

TEST_CASE("zero-error cycle leaves the drain commands at their bias") {
  ControllerConfig c;
  ControllerState st = paper_gains();
  const ActuatorCommands cmd = controller_cycle(nominal_cache(c, 0.0), st, c, 0.0);
  CHECK(cmd.lv1 == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(cmd.lv2 == doctest::Approx(0.0).epsilon(1e-9));
  CHECK_FALSE(cmd.stop_pump);
  CHECK(cmd.alarms.empty());
}

TEST_CASE("a stale P2 holds the water command and raises a stale alarm") {
  ControllerConfig c;
  c.stale_after = 5.0;
  ControllerState st = paper_gains();
  controller_cycle(nominal_cache(c, 0.0, 50.0, 70.0), st, c, 0.0);
  const double lv1 = st.lv1_command;
  REQUIRE(lv1 > 0.0);

  GatewayCache cache = nominal_cache(c, 0.0, 55.0, 65.0);
  cache.update(p3_for(65.0, c), 30.0, 30.0);
  cache.update(reading(SensorId::P1, 161.0), 30.0, 30.0);
  cache.update(reading(SensorId::T, 22.0), 30.0, 30.0);
  const ActuatorCommands cmd = controller_cycle(cache, st, c, 30.0);
  CHECK(cmd.water_held);
  CHECK_FALSE(cmd.oil_held);
  CHECK(cmd.lv1 == lv1);
  bool stale = false;
  for (const auto& a : cmd.alarms) stale = stale || (a.kind == AlarmKind::StaleData && a.detail == "P2");
  CHECK(stale);
  CHECK_FALSE(cmd.stop_pump);
}

TEST_CASE("trip precedence over the loops") {
  ControllerConfig c;
  ControllerState st = paper_gains();
  GatewayCache cache = nominal_cache(c, 0.0, 70.0, 70.0);
  cache.update(reading(SensorId::P1, 400.0), 0.0, 0.0);
  const ActuatorCommands cmd = controller_cycle(cache, st, c, 0.0);
  CHECK(cmd.stop_pump);
  CHECK(cmd.water_held);
  CHECK(cmd.oil_held);
}

TEST_CASE("gateway cache rejects packets older than the cached one") {
  GatewayCache cache;
  CHECK(cache.update(reading(SensorId::P2, 100.0), 5.0, 5.1));
  CHECK_FALSE(cache.update(reading(SensorId::P2, 50.0), 4.0, 6.0));
  CHECK(cache.entry(SensorId::P2).reading.value == 100.0);
  CHECK(cache.entry(SensorId::P2).arrival_time == 5.1);
  CHECK(cache.update(reading(SensorId::P2, 120.0), 6.0, 6.2));
  CHECK(cache.entry(SensorId::P2).reading.value == 120.0);
  CHECK(cache.entry(SensorId::P2).arrival_time >= 5.1);
  CHECK_FALSE(cache.entry(SensorId::P3).valid);
}

TEST_CASE("rising-edge alarm reporting") {
  ControllerConfig c;
  ControllerState st = paper_gains();
  GatewayCache cache;
  cache.update(p3_for(60.0, c), 0.0, 0.0);
  const auto first = controller_cycle(cache, st, c, 0.0);
  REQUIRE(first.alarms.size() == 1);
  CHECK(first.alarms[0].kind == AlarmKind::StaleData);
  CHECK(controller_cycle(cache, st, c, 1.0).alarms.empty());
}
