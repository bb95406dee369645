#include "separator/types.hpp"

namespace separator {

namespace {
constexpr std::array<std::string_view, 4> kSensorNames{"P1", "P2", "P3", "T"};
constexpr std::array<std::string_view, 5> kValveNames{"V1", "V2", "V3", "LV1", "LV2"};
constexpr std::array<std::string_view, 8> kCommandNames{
    "stop_pump", "start_pump",   "set_valve",     "set_setpoint",
    "emergency_stop", "reset_latch", "start_jamming", "stop_jamming"};
}  // namespace

std::string_view to_string(SensorId id) { return kSensorNames[static_cast<std::size_t>(id)]; }
std::string_view to_string(ValveId id) { return kValveNames[static_cast<std::size_t>(id)]; }
std::string_view to_string(Loop loop) { return loop == Loop::Water ? "water" : "oil"; }
std::string_view to_string(CommandKind kind) {
  return kCommandNames[static_cast<std::size_t>(kind)];
}

std::optional<SensorId> sensor_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kSensorNames.size(); ++i)
    if (kSensorNames[i] == s) return static_cast<SensorId>(i);
  return std::nullopt;
}

std::optional<ValveId> valve_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kValveNames.size(); ++i)
    if (kValveNames[i] == s) return static_cast<ValveId>(i);
  return std::nullopt;
}

std::optional<Loop> loop_from_string(std::string_view s) {
  if (s == "water") return Loop::Water;
  if (s == "oil") return Loop::Oil;
  return std::nullopt;
}

std::optional<CommandKind> command_kind_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kCommandNames.size(); ++i)
    if (kCommandNames[i] == s) return static_cast<CommandKind>(i);
  return std::nullopt;
}

}  // namespace separator
