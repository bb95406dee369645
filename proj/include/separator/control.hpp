// The level controller: two PI loops, differential-pressure level
// conversion, alarm evaluation, the 80 % safety interlock and the periodic
// read-compute-write cycle against the gateway cache.
#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "separator/plant.hpp"
#include "separator/types.hpp"

namespace separator {

/// How the configured integral constant is read.
enum class IntegralMode {
  /// u = kp * (e + acc / ti), ti in seconds (series form).
  TimeSeconds,
  /// u = kp * e + ti * acc, the constant taken as an integral gain in 1/s.
  GainPerSecond,
};

struct PidController {
  double kp = 1.0;
  /// Integral time in seconds; 0 or infinity disables integral action.
  double ti = std::numeric_limits<double>::infinity();
  double kd = 0.0;
  double setpoint = 50.0;
  double integral_acc = 0.0;  // percent * seconds
  double out_min = 0.0;
  double out_max = 100.0;
  double last_output = 0.0;
  IntegralMode mode = IntegralMode::TimeSeconds;

  bool integral_enabled() const { return std::isfinite(ti) && ti != 0.0; }
};

struct PidStep {
  PidController pid;
  double output = 0.0;
  bool data_quality_alarm = false;
};

/// Direct-acting PI step (level above setpoint opens the drain). Integration
/// is conditional: when the unclamped output would pass a limit in the
/// direction the error pushes it, the accumulator advances at most to the
/// value that puts the output on that limit, and is frozen while it stays
/// there.
PidStep pid_step(PidController pid, double measurement, double dt);

enum class FluidChannel { Water, Oil };

struct LevelEstimate {
  double percent = 0.0;
  /// Input pressure was negative and was clamped to 0 %.
  bool clamped = false;
};

/// Inverts the P2 (water) or P3 (oil) hydrostatic model into a level percent.
LevelEstimate level_from_dp(double pressure_pa, const PlantParams& params,
                            const TankGeometry& geometry, FluidChannel which);

/// Left-compartment total level derived from P2's differential and bottom-tap
/// pressures, assuming everything above the water layer is oil.
LevelEstimate left_total_from_p2(double dp_pa, double bottom_pa, const PlantParams& params,
                                 const TankGeometry& geometry);

struct SafetyConfig {
  double level_trip = 80.0;           // percent
  double feed_pressure_trip = 250.0;  // kPa
  double oil_temp_trip = 45.0;        // degC
  bool latched = false;
};

struct CacheEntry {
  SensorReading reading;
  double origin_time = 0.0;
  double arrival_time = 0.0;
  bool valid = false;
};

/// Latest value per sensor as seen by the controller.
class GatewayCache {
 public:
  /// Stores the reading unless it originated before the cached one.
  /// Returns false for a stale (out-of-order) packet.
  bool update(const SensorReading& reading, double origin_time, double arrival_time);
  const CacheEntry& entry(SensorId id) const { return entries_[static_cast<std::size_t>(id)]; }

 private:
  std::array<CacheEntry, 4> entries_{};
};

enum class AlarmKind {
  OverPressure,
  OverTemperature,
  HighWaterLevel,
  HighLeftTotalLevel,
  HighOilLevel,
  StaleData,
  DataQuality,
  EmergencyStop,
};

std::string_view to_string(AlarmKind kind);

struct AlarmEvent {
  AlarmKind kind = AlarmKind::StaleData;
  double time = 0.0;
  double value = 0.0;
  bool trips = false;  // latches the interlock
  std::string detail;
};

struct ControllerConfig {
  PlantParams params;      // densities used for level conversion
  TankGeometry geometry;
  double period = 1.0;     // s
  double stale_after = 5.0;  // s
  /// First-order filter applied to the converted levels before the PI
  /// loops; 0 disables.
  double water_pv_filter = 0.0;
  double oil_pv_filter = 0.0;
};

/// Levels and process values decoded from the cache.
struct ProcessView {
  std::optional<double> water_level;       // percent
  std::optional<double> left_total_level;  // percent
  std::optional<double> oil_level;         // percent
  std::optional<double> feed_pressure;     // kPa
  std::optional<double> oil_temp;          // degC
  bool clamped = false;
};

ProcessView decode_cache(const GatewayCache& cache, const ControllerConfig& config);

/// Evaluates P1 over-pressure, T over-temperature and the 80 % level trips.
/// Any trip latches `safety`; repeated trips leave a single latch.
std::vector<AlarmEvent> alarm_eval(const GatewayCache& cache, SafetyConfig& safety,
                                   const ControllerConfig& config, double now = 0.0);

struct ActuatorCommands {
  double lv1 = 0.0;
  double lv2 = 0.0;
  bool stop_pump = false;
  bool water_held = false;
  bool oil_held = false;
  std::vector<AlarmEvent> alarms;
};

/// Controller state carried between cycles.
struct ControllerState {
  PidController water;
  PidController oil;
  SafetyConfig safety;
  double lv1_command = 0.0;
  double lv2_command = 0.0;
  std::optional<double> water_manual;  // operator override of LV1
  std::optional<double> oil_manual;    // operator override of LV2
  std::optional<double> water_pv;      // filtered level
  std::optional<double> oil_pv;
  /// Alarms currently asserted, keyed "kind/detail"; only rising edges are
  /// reported per cycle.
  std::vector<std::string> active_alarms;
};

/// One read-compute-write cycle: decode, safety first, then both loops on
/// fresh data. A loop whose sensor is older than `stale_after` holds its
/// last command and raises a stale-data alarm.
ActuatorCommands controller_cycle(const GatewayCache& cache, ControllerState& state,
                                  const ControllerConfig& config, double now);

}  // namespace separator
