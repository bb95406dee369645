// Continuous model of the two-layer separator rig: feed tank and pump, feed
// and inlet valves, a two-compartment separation tank with a weir plate,
// drain valves LV1/LV2, and the four field instruments.
//
// Volumes are in litres, heights in metres, flows in L/s, valve openings in
// percent. The model is a set of pure state-transition functions integrated
// with explicit Euler.
#pragma once

#include <array>
#include <string>
#include <vector>

#include "separator/sim_kernel.hpp"
#include "separator/types.hpp"

namespace separator {

struct TankGeometry {
  double left_area = 0.06;          // m^2
  double right_area = 0.06;         // m^2
  double tank_height = 0.5;         // m
  double weir_height_frac = 0.70;   // plate height / tank height
  double feed_capacity_water = 100.0;  // L
  double feed_capacity_oil = 105.0;    // L

  double left_capacity() const { return left_area * tank_height * 1000.0; }
  double right_capacity() const { return right_area * tank_height * 1000.0; }
  double separator_capacity() const { return left_capacity() + right_capacity(); }
  double weir_height() const { return weir_height_frac * tank_height; }

  /// Throws ConfigError naming the violated invariant.
  void validate() const;
};

struct PlantParams {
  double gravity = 9.81;        // m/s^2
  double rho_water = 998.0;     // kg/m^3
  double rho_oil = 790.0;       // kg/m^3, Exxsol D-60
  double water_fraction = 0.49; // inlet mixture water fraction
  // Calibrated once against the stable-operation wave pattern; frozen.
  double q_pump_max = 0.25;     // L/s at V3 = 100%
  double k_sep = 0.05;          // 1/s, first-order separation rate
  double cv_water = 2.75;       // LV1 flow coefficient, L/s per sqrt(m) at 100%
  double cv_oil = 1.6;          // LV2 flow coefficient, L/s per sqrt(m) at 100%
  double c_weir = 12.0;         // L/s per metre of head above the plate

  double ambient_temp = 20.0;       // degC
  double pump_heating = 0.002;      // degC/s while the pump runs
  double temp_relax = 0.0005;       // 1/s relaxation toward ambient
  double static_pressure = 101.325; // kPa, feed line with pump off
  double pump_head = 60.0;          // kPa added by the pump at V3 = 100%
  double restriction_gain = 1.0;    // extra head fraction as V3 closes

  void validate() const;
};

struct ValveActuator {
  static constexpr double kTravelTime = 9.0;  // s, full stroke
  static constexpr double kSlewRate = 100.0 / kTravelTime;  // %/s

  double position = 0.0;  // percent open
  double command = 0.0;   // percent open
};

/// Moves `position` toward `command` by at most kSlewRate * dt.
/// Throws RangeError for a command outside [0, 100] or dt <= 0.
ValveActuator valve_slew(ValveActuator actuator, double dt);

struct PlantState {
  double left_water_vol = 0.0;
  double left_oil_vol = 0.0;
  /// Unseparated mixture in the left compartment, tracked per species.
  double left_unsep_water = 0.0;
  double left_unsep_oil = 0.0;
  double right_oil_vol = 0.0;
  double feed_water_vol = 100.0;
  double feed_oil_vol = 105.0;
  std::array<ValveActuator, 5> valves{};
  bool pump_running = false;
  double oil_temp = 20.0;            // degC
  double feedline_pressure = 101.325; // kPa

  double left_unseparated_vol() const { return left_unsep_water + left_unsep_oil; }
  double left_total_vol() const { return left_water_vol + left_oil_vol + left_unseparated_vol(); }
  double total_water() const { return left_water_vol + left_unsep_water + feed_water_vol; }
  double total_oil() const {
    return left_oil_vol + left_unsep_oil + right_oil_vol + feed_oil_vol;
  }

  ValveActuator& valve(ValveId id) { return valves[static_cast<std::size_t>(id)]; }
  const ValveActuator& valve(ValveId id) const { return valves[static_cast<std::size_t>(id)]; }

  bool all_finite() const;
  std::string dump() const;
};

/// Negative volume clamped after a step.
struct ConservationDiagnostic {
  std::string field;
  double clamped_amount = 0.0;
};

struct StepResult {
  PlantState state;
  std::vector<ConservationDiagnostic> diagnostics;
};

/// Advances the plant by dt. Order: pump inflow into the unseparated pool,
/// first-order separation, weir overflow of left oil into the right
/// compartment, orifice drains back to the feed tank, valve slew, then the
/// temperature and feed-pressure auxiliaries.
/// Throws SimulationError if the input or result is non-finite.
StepResult step_plant(const PlantState& state, const TankGeometry& geometry,
                      const PlantParams& params, double dt);

struct SensorSpec {
  SensorId id = SensorId::P2;
  double noise_std = 0.0;
  double calibration_bias = 0.0;
  double sample_period = 1.0;  // s

  void validate() const;
};

struct SensorReading {
  SensorId id = SensorId::P2;
  /// Primary variable: Pa for P2/P3, kPa for P1, degC for T.
  double value = 0.0;
  /// Secondary variable. For P2, the gauge pressure at the bottom tap (Pa),
  /// from which the controller derives the left-compartment total level.
  double secondary = 0.0;
  double sampled_at = 0.0;
};

/// Noiseless instrument model.
double sensor_truth(const PlantState& state, const TankGeometry& geometry,
                    const PlantParams& params, SensorId id);

/// Instrument reading with Gaussian noise and calibration bias.
SensorReading read_sensor(const PlantState& state, const TankGeometry& geometry,
                          const PlantParams& params, const SensorSpec& spec, RngStream& rng);

enum class LevelKind { LeftWater, LeftTotal, RightOil };

double left_water_height(const PlantState& state, const TankGeometry& geometry);
double left_total_height(const PlantState& state, const TankGeometry& geometry);
double right_oil_height(const PlantState& state, const TankGeometry& geometry);

/// Liquid height as percent of tank height.
double level_percent(const PlantState& state, const TankGeometry& geometry, LevelKind which);

/// Volume that brings a compartment layer to `percent` of tank height.
double volume_for_level(const TankGeometry& geometry, LevelKind which, double percent);

}  // namespace separator
