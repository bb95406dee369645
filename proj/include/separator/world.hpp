// The composed simulation: plant, mesh network, gateway cache and
// controller advanced on one fixed-step clock.
//
// Each tick schedules the periodic work due at that tick (sensor bursts,
// the network slot, the controller cycle), dispatches every due event in
// kind order, integrates the plant over one step and advances the clock.
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "separator/control.hpp"
#include "separator/plant.hpp"
#include "separator/sim_kernel.hpp"
#include "separator/wireless.hpp"

namespace separator {

struct WorldConfig {
  double step = 0.01;
  std::uint64_t seed = 1;

  TankGeometry geometry;
  PlantParams params;
  PlantState initial;
  std::array<SensorSpec, 4> sensors{SensorSpec{SensorId::P1, 0.0, 0.0, 1.0},
                                    SensorSpec{SensorId::P2, 0.0, 0.0, 1.0},
                                    SensorSpec{SensorId::P3, 0.0, 0.0, 1.0},
                                    SensorSpec{SensorId::T, 0.0, 0.0, 1.0}};

  ControllerConfig controller;
  PidController water_pid{.kp = 1.4, .ti = 80.0, .setpoint = 40.0};
  PidController oil_pid{.kp = 2.0, .ti = 40.0, .setpoint = 60.0};
  SafetyConfig safety;
  /// Slot within each control period at which the controller runs.
  std::size_t controller_offset_slots = 50;

  MeshConfig mesh;
  std::array<Position, kNodeCount> positions{};
  LinkQualityMatrix link_quality = full_mesh_quality();
  BlacklistConfig blacklist;
  RadioEnvironment radio;
  /// Channels used by the operator's start_jamming command.
  std::vector<int> research_jam_channels{14, 15, 16, 23, 24, 25};

  /// Keep a log of every dispatched event (tests and debugging).
  bool record_dispatch = false;
};

/// One row of the per-control-cycle time series (true plant values).
struct TracePoint {
  double time = 0.0;
  double water_level = 0.0;  // percent
  double oil_level = 0.0;    // percent
  double left_total = 0.0;   // percent
  double lv1 = 0.0;          // position, percent
  double lv2 = 0.0;
  double setpoint_water = 0.0;
  double setpoint_oil = 0.0;
  bool pump_running = false;
  std::string alarms;  // ';'-separated alarm kinds raised this cycle
};

struct CommandRecord {
  std::string command_id;
  CommandKind kind = CommandKind::StopPump;
  double applied_at = 0.0;  // sim time
  bool accepted = true;
  std::string reason;
};

struct DispatchRecord {
  std::int64_t tick = 0;
  EventKind kind = EventKind::kPacketTx;
};

struct SimWorld {
  WorldConfig config;
  SimClock clock;
  PlantState plant;
  ControllerState controller;
  GatewayCache cache;
  MeshNetwork network;
  RadioEnvironment radio;
  EventQueue events;

  RngStream link_rng;
  RngStream sensor_rng;
  RngStream interference_rng;

  std::vector<TracePoint> trace;
  std::vector<AlarmEvent> alarm_log;
  std::vector<CommandRecord> command_log;
  std::vector<DispatchRecord> dispatch_log;
  std::size_t conservation_diagnostics = 0;
  double last_command_effect = -1.0;
};

/// Builds a world at t = 0. Throws ConfigError on invalid configuration.
SimWorld make_world(const WorldConfig& config);

/// Queues an operator command for dispatch at the next tick.
void submit_command(SimWorld& world, const OperatorCommand& cmd);
/// Queues an event at an arbitrary future tick.
void schedule(SimWorld& world, std::int64_t tick, EventKind kind, EventPayload payload);

/// Advances the world by exactly one step. Throws SimulationError when the
/// plant integration produces a non-finite state.
void tick(SimWorld& world);

/// Ticks until now >= t_end. Throws RangeError when t_end < now.
void run_until(SimWorld& world, double t_end);

/// Network statistics over [t0, t1).
NetworkStats window_stats(const SimWorld& world, double t0, double t1);

}  // namespace separator
