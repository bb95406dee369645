#include <cmath>

#include "doctest.h"
#include "separator/plant.hpp"

using namespace separator;

namespace {

PlantState running_state() {
  PlantState s;
  s.pump_running = true;
  s.valve(ValveId::V1) = {100.0, 100.0};
  s.valve(ValveId::V2) = {100.0, 100.0};
  s.valve(ValveId::V3) = {60.0, 60.0};
  return s;
}

}  // namespace

TEST_CASE("valve travels full stroke in nine seconds") {
  ValveActuator v{0.0, 100.0};
  CHECK(valve_slew(v, 9.0).position == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(valve_slew(v, 4.5).position == doctest::Approx(50.0).epsilon(1e-12));
  ValveActuator closing{100.0, 0.0};
  CHECK(valve_slew(closing, 4.5).position == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(valve_slew(closing, 20.0).position == 0.0);
}

TEST_CASE("valve already at its command does not move") {
  for (double dt : {0.01, 1.0, 100.0}) CHECK(valve_slew({50.0, 50.0}, dt).position == 50.0);
}

TEST_CASE("900 steps of 0.01 s reach the command exactly once") {
  ValveActuator v{0.0, 100.0};
  for (int i = 0; i < 899; ++i) v = valve_slew(v, 0.01);
  CHECK(v.position < 100.0);
  CHECK(v.position == doctest::Approx(899.0 / 900.0 * 100.0).epsilon(1e-9));
  v = valve_slew(v, 0.01);
  CHECK(v.position == 100.0);
}

TEST_CASE("valve command outside [0, 100] is a range error") {
  CHECK_THROWS_AS(valve_slew({0.0, 101.0}, 0.01), RangeError);
  CHECK_THROWS_AS(valve_slew({0.0, -0.5}, 0.01), RangeError);
  CHECK_THROWS_AS(valve_slew({0.0, 50.0}, 0.0), RangeError);
}

TEST_CASE("pump off and all valves closed leave the state unchanged") {
  PlantState s;
  s.left_water_vol = 9.0;
  s.left_oil_vol = 4.0;
  s.right_oil_vol = 6.0;
  s.oil_temp = 20.0;
  const TankGeometry g;
  const PlantParams p;
  const PlantState next = step_plant(s, g, p, 0.01).state;
  CHECK(next.left_water_vol == s.left_water_vol);
  CHECK(next.left_oil_vol == s.left_oil_vol);
  CHECK(next.right_oil_vol == s.right_oil_vol);
  CHECK(next.feed_water_vol == s.feed_water_vol);
  CHECK(next.feed_oil_vol == s.feed_oil_vol);
  CHECK(next.left_unseparated_vol() == 0.0);
}

TEST_CASE("unseparated mixture decays by one explicit Euler step") {
  PlantState s;
  s.left_unsep_water = 5.0;
  s.left_unsep_oil = 5.0;
  PlantParams p;
  p.k_sep = 0.05;
  const PlantState next = step_plant(s, TankGeometry{}, p, 0.01).state;
  CHECK(next.left_unseparated_vol() == doctest::Approx(10.0 * (1.0 - 0.05 * 0.01)).epsilon(1e-12));
  CHECK(next.left_unseparated_vol() == doctest::Approx(9.995).epsilon(1e-12));
  // Against the exponential solution the per-step error is below 0.01 %.
  const double exact = 10.0 * std::exp(-0.05 * 0.01);
  CHECK(std::abs(next.left_unseparated_vol() - exact) / exact < 1e-4);
}

TEST_CASE("separation decay is monotone toward zero with the pump off") {
  PlantState s;
  s.left_unsep_water = 3.0;
  s.left_unsep_oil = 2.0;
  double prev = s.left_unseparated_vol();
  for (int i = 0; i < 60000; ++i) {
    s = step_plant(s, TankGeometry{}, PlantParams{}, 0.01).state;
    REQUIRE(s.left_unseparated_vol() <= prev);
    prev = s.left_unseparated_vol();
  }
  CHECK(prev < 1e-6);
}

TEST_CASE("left water level holds at the equilibrium drain opening") {
  const TankGeometry g;
  const PlantParams p;
  PlantState s = running_state();
  // Inflow of water and its steady unseparated inventory.
  const double q_w = p.q_pump_max * 0.60 * p.water_fraction;
  const double q_o = p.q_pump_max * 0.60 * (1.0 - p.water_fraction);
  s.left_unsep_water = q_w / p.k_sep;
  s.left_unsep_oil = q_o / p.k_sep;
  s.left_water_vol = volume_for_level(g, LevelKind::LeftWater, 40.0);
  // Orifice balance: cv * x * sqrt(h) = q_w.
  const double h = 0.40 * g.tank_height;
  const double x = q_w / (p.cv_water * std::sqrt(h)) * 100.0;
  REQUIRE(x > 0.0);
  REQUIRE(x < 100.0);
  s.valve(ValveId::LV1) = {x, x};
  s.valve(ValveId::LV2) = {50.0, 50.0};
  const double start = level_percent(s, g, LevelKind::LeftWater);
  double worst = 0.0;
  for (int i = 0; i < 6000; ++i) {
    s = step_plant(s, g, p, 0.01).state;
    worst = std::max(worst, std::abs(level_percent(s, g, LevelKind::LeftWater) - start));
  }
  CHECK(worst <= 0.1);
}

TEST_CASE("P2 and P3 follow the hydrostatic formulas") {
  const TankGeometry g;
  const PlantParams p;
  PlantState s;
  SensorSpec p2{SensorId::P2, 0.0, 0.0, 1.0};
  SensorSpec p3{SensorId::P3, 0.0, 0.0, 1.0};
  RngStream rng(1, "sensor-noise");
  CHECK(read_sensor(s, g, p, p2, rng).value == 0.0);

  s.left_water_vol = 0.2 * g.left_area * 1000.0;
  CHECK(read_sensor(s, g, p, p2, rng).value == doctest::Approx(9.81 * 208.0 * 0.2).epsilon(1e-12));
  CHECK(read_sensor(s, g, p, p2, rng).value == doctest::Approx(408.1).epsilon(1e-4));

  s.right_oil_vol = 0.3 * g.right_area * 1000.0;
  CHECK(read_sensor(s, g, p, p3, rng).value == doctest::Approx(9.81 * 790.0 * 0.3).epsilon(1e-12));
  CHECK(read_sensor(s, g, p, p3, rng).value == doctest::Approx(2325.0).epsilon(1e-4));

  SensorSpec biased = p2;
  biased.calibration_bias = 3.0;
  PlantState empty;
  CHECK(read_sensor(empty, g, p, biased, rng).value == 3.0);
}

TEST_CASE("sensor noise has the configured spread") {
  const TankGeometry g;
  const PlantParams p;
  PlantState s;
  s.left_water_vol = 12.0;
  SensorSpec spec{SensorId::P2, 2.0, 0.0, 1.0};
  RngStream rng(3, "sensor-noise");
  const double truth = sensor_truth(s, g, p, SensorId::P2);
  constexpr int n = 20000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double e = read_sensor(s, g, p, spec, rng).value - truth;
    sum += e;
    sum2 += e * e;
  }
  CHECK(std::abs(sum / n) < 5.0 * 2.0 / std::sqrt(n));
  CHECK(std::sqrt(sum2 / n) == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("level percent is volume over a uniform column") {
  const TankGeometry g;
  REQUIRE(g.left_capacity() == doctest::Approx(30.0));
  PlantState s;
  CHECK(level_percent(s, g, LevelKind::LeftWater) == 0.0);
  CHECK(level_percent(s, g, LevelKind::RightOil) == 0.0);
  s.left_water_vol = 12.0;
  CHECK(level_percent(s, g, LevelKind::LeftWater) == doctest::Approx(40.0).epsilon(1e-12));
  s.right_oil_vol = g.right_area * g.tank_height * 1000.0;
  CHECK(level_percent(s, g, LevelKind::RightOil) == doctest::Approx(100.0).epsilon(1e-12));
  s.left_oil_vol = 6.0;
  s.left_unsep_water = 3.0;
  CHECK(level_percent(s, g, LevelKind::LeftTotal) == doctest::Approx(70.0).epsilon(1e-12));
}

TEST_CASE("geometry invariants") {
  TankGeometry g;
  CHECK(g.separator_capacity() == doctest::Approx(60.0));
  CHECK_NOTHROW(g.validate());
  g.weir_height_frac = 0.85;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g.weir_height_frac = 0.7;
  g.left_area = 0.0;
  CHECK_THROWS_AS(g.validate(), ConfigError);
}

TEST_CASE("species are conserved while the plant runs") {
  const TankGeometry g;
  const PlantParams p;
  PlantState s = running_state();
  s.valve(ValveId::LV1) = {20.0, 35.0};
  s.valve(ValveId::LV2) = {10.0, 60.0};
  const double water0 = s.total_water();
  const double oil0 = s.total_oil();
  const double dt = 0.01;
  const int steps = 180000;
  for (int i = 0; i < steps; ++i) {
    auto r = step_plant(s, g, p, dt);
    REQUIRE(r.diagnostics.empty());
    s = r.state;
    if (i == 60000) {
      s.valve(ValveId::LV1).command = 80.0;
      s.valve(ValveId::LV2).command = 5.0;
    }
  }
  const double duration = steps * dt;
  CHECK(std::abs(s.total_water() - water0) / duration <= 1e-6);
  CHECK(std::abs(s.total_oil() - oil0) / duration <= 1e-6);
}

TEST_CASE("valve positions never move faster than 100/9 percent per second") {
  const TankGeometry g;
  const PlantParams p;
  PlantState s = running_state();
  const double dt = 0.01;
  RngStream rng(11, "commands");
  for (int i = 0; i < 20000; ++i) {
    if (i % 250 == 0)
      for (auto& v : s.valves) v.command = std::floor(rng.uniform() * 101.0);
    const PlantState next = step_plant(s, g, p, dt).state;
    for (std::size_t k = 0; k < s.valves.size(); ++k)
      REQUIRE(std::abs(next.valves[k].position - s.valves[k].position) / dt <=
              100.0 / 9.0 * (1.0 + 1e-12));
    s = next;
  }
}

TEST_CASE("LV1 outflow never decreases with more water head") {
  const TankGeometry g;
  const PlantParams p;
  double prev = -1.0;
  for (double vol = 0.0; vol <= 24.0; vol += 0.5) {
    PlantState s;
    s.left_water_vol = vol;
    s.feed_water_vol = 0.0;
    s.valve(ValveId::LV1) = {40.0, 40.0};
    const double drained = step_plant(s, g, p, 0.01).state.feed_water_vol;
    CHECK(drained >= prev);
    prev = drained;
  }
}

TEST_CASE("non-finite state is a simulation error carrying the state") {
  PlantState s;
  s.left_water_vol = std::nan("");
  try {
    step_plant(s, TankGeometry{}, PlantParams{}, 0.01);
    FAIL("expected a simulation error");
  } catch (const SimulationError& e) {
    CHECK(e.state_dump().find("left_water=") != std::string::npos);
  }
}
