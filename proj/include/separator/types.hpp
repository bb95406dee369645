// Identifiers and small value types used across the rig model.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace separator {

enum class SensorId : std::uint8_t { P1 = 0, P2 = 1, P3 = 2, T = 3 };
inline constexpr std::array<SensorId, 4> kAllSensors{SensorId::P1, SensorId::P2, SensorId::P3,
                                                     SensorId::T};

enum class ValveId : std::uint8_t { V1 = 0, V2 = 1, V3 = 2, LV1 = 3, LV2 = 4 };
inline constexpr std::array<ValveId, 5> kAllValves{ValveId::V1, ValveId::V2, ValveId::V3,
                                                   ValveId::LV1, ValveId::LV2};

enum class Loop : std::uint8_t { Water = 0, Oil = 1 };

std::string_view to_string(SensorId id);
std::string_view to_string(ValveId id);
std::string_view to_string(Loop loop);
std::optional<SensorId> sensor_from_string(std::string_view s);
std::optional<ValveId> valve_from_string(std::string_view s);
std::optional<Loop> loop_from_string(std::string_view s);

/// Value outside its admissible range.
class RangeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid or inconsistent configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class CommandKind : std::uint8_t {
  StopPump,
  StartPump,
  SetValve,
  SetSetpoint,
  EmergencyStop,
  ResetLatch,
  StartJamming,
  StopJamming,
};

std::string_view to_string(CommandKind kind);
std::optional<CommandKind> command_kind_from_string(std::string_view s);

/// Operator intervention, delivered to the simulation as a queued event.
struct OperatorCommand {
  CommandKind kind = CommandKind::StopPump;
  std::string command_id;
  ValveId valve = ValveId::V3;   // SetValve
  Loop loop = Loop::Water;       // SetSetpoint
  double value = 0.0;            // percent for SetValve / SetSetpoint
  double issued_at = 0.0;        // wall-clock seconds (live mode) or sim time (replay)
};

}  // namespace separator
