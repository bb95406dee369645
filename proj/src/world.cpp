#include "separator/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace separator {

namespace {

std::int64_t ticks_for(double period, double step) {
  return std::max<std::int64_t>(1, std::llround(period / step));
}

void validate(const WorldConfig& c) {
  c.geometry.validate();
  c.params.validate();
  for (const auto& s : c.sensors) s.validate();
  if (!(c.controller.period > 0.0)) throw ConfigError("controller period must be > 0");
  if (!(c.controller.stale_after > 0.0)) throw ConfigError("stale_after must be > 0");
  if (std::abs(c.mesh.slot_duration - c.step) > 1e-12)
    throw ConfigError("kernel step must equal the network slot duration");
  for (const auto* pid : {&c.water_pid, &c.oil_pid})
    if (!(pid->setpoint > 0.0 && pid->setpoint < c.safety.level_trip))
      throw ConfigError("setpoint must lie in (0, level_trip)");
}

void log_alarm(SimWorld& w, AlarmEvent a, std::string& row_alarms) {
  if (!row_alarms.empty()) row_alarms += ';';
  row_alarms += std::string(to_string(a.kind));
  w.alarm_log.push_back(std::move(a));
}

void record_trace(SimWorld& w, const std::string& alarms) {
  const auto& g = w.config.geometry;
  TracePoint p;
  p.time = w.clock.now();
  p.water_level = level_percent(w.plant, g, LevelKind::LeftWater);
  p.oil_level = level_percent(w.plant, g, LevelKind::RightOil);
  p.left_total = level_percent(w.plant, g, LevelKind::LeftTotal);
  p.lv1 = w.plant.valve(ValveId::LV1).position;
  p.lv2 = w.plant.valve(ValveId::LV2).position;
  p.setpoint_water = w.controller.water.setpoint;
  p.setpoint_oil = w.controller.oil.setpoint;
  p.pump_running = w.plant.pump_running;
  p.alarms = alarms;
  w.trace.push_back(std::move(p));
}

void latch(SimWorld& w, AlarmKind kind, const std::string& detail) {
  w.controller.safety.latched = true;
  w.plant.pump_running = false;
  w.alarm_log.push_back({kind, w.clock.now(), 0.0, true, detail});
}

void apply_command(SimWorld& w, const OperatorCommand& cmd) {
  CommandRecord rec{cmd.command_id, cmd.kind, w.clock.now(), true, {}};
  auto reject = [&](std::string why) {
    rec.accepted = false;
    rec.reason = std::move(why);
  };
  switch (cmd.kind) {
    case CommandKind::StopPump:
      w.plant.pump_running = false;
      break;
    case CommandKind::StartPump:
      if (w.controller.safety.latched) reject("latched");
      else w.plant.pump_running = true;
      break;
    case CommandKind::SetValve:
      if (!(cmd.value >= 0.0 && cmd.value <= 100.0)) {
        reject("valve percent outside [0, 100]");
      } else if (cmd.valve == ValveId::LV1) {
        w.controller.water_manual = cmd.value;
        w.controller.lv1_command = cmd.value;
        w.plant.valve(ValveId::LV1).command = cmd.value;
      } else if (cmd.valve == ValveId::LV2) {
        w.controller.oil_manual = cmd.value;
        w.controller.lv2_command = cmd.value;
        w.plant.valve(ValveId::LV2).command = cmd.value;
      } else {
        w.plant.valve(cmd.valve).command = cmd.value;
      }
      break;
    case CommandKind::SetSetpoint:
      if (!(cmd.value > 0.0 && cmd.value < w.controller.safety.level_trip)) {
        reject("setpoint outside (0, 80)");
      } else if (cmd.loop == Loop::Water) {
        w.controller.water.setpoint = cmd.value;
        w.controller.water_manual.reset();
      } else {
        w.controller.oil.setpoint = cmd.value;
        w.controller.oil_manual.reset();
      }
      break;
    case CommandKind::EmergencyStop:
      latch(w, AlarmKind::EmergencyStop, "operator");
      break;
    case CommandKind::ResetLatch:
      w.controller.safety.latched = false;
      break;
    case CommandKind::StartJamming:
      w.radio.manual = JammingWindow{w.clock.now(), std::numeric_limits<double>::infinity(),
                                     w.config.research_jam_channels,
                                     cmd.value > 0.0 ? std::min(cmd.value / 100.0, 1.0) : 1.0};
      break;
    case CommandKind::StopJamming:
      w.radio.manual.reset();
      break;
  }
  if (rec.accepted) w.last_command_effect = w.clock.now();
  w.command_log.push_back(std::move(rec));
}

void dispatch(SimWorld& w, const SimEvent& ev) {
  if (w.config.record_dispatch) w.dispatch_log.push_back({ev.tick, ev.kind});
  const double now = w.clock.now();
  switch (ev.kind) {
    case EventKind::kSafetyTrip:
      latch(w, AlarmKind::EmergencyStop, std::get<SafetyTripPayload>(ev.payload).reason);
      break;
    case EventKind::kOperatorCommand:
      apply_command(w, std::get<OperatorCommand>(ev.payload));
      break;
    case EventKind::kSensorSample: {
      const SensorId id = std::get<SensorSamplePayload>(ev.payload).sensor;
      SensorReading r = read_sensor(w.plant, w.config.geometry, w.config.params,
                                    w.config.sensors[static_cast<std::size_t>(id)], w.sensor_rng);
      r.sampled_at = now;
      enqueue_reading(w.network, id, r, now);
      break;
    }
    case EventKind::kPacketTx: {
      for (const auto& o : transmit_slot(w.network, w.radio, w.clock.slot_index(), w.link_rng)) {
        const Packet& p = w.network.packets[o.packet];
        if (o.acked && o.to == NodeId::GW)
          w.cache.update(p.payload, p.created_at, *p.delivered_at);
      }
      break;
    }
    case EventKind::kControllerCycle: {
      ActuatorCommands cmd = controller_cycle(w.cache, w.controller, w.config.controller, now);
      w.plant.valve(ValveId::LV1).command = std::clamp(cmd.lv1, 0.0, 100.0);
      w.plant.valve(ValveId::LV2).command = std::clamp(cmd.lv2, 0.0, 100.0);
      if (cmd.stop_pump) w.plant.pump_running = false;
      std::string row_alarms;
      for (auto& a : cmd.alarms) log_alarm(w, std::move(a), row_alarms);
      record_trace(w, row_alarms);
      break;
    }
  }
}

}  // namespace

SimWorld make_world(const WorldConfig& config) {
  validate(config);
  SimWorld w{config,
             SimClock(config.step),
             config.initial,
             ControllerState{},
             GatewayCache{},
             build_mesh(config.positions, config.link_quality, config.mesh),
             config.radio,
             EventQueue{},
             RngStream(config.seed, "link-noise"),
             RngStream(config.seed, "sensor-noise"),
             RngStream(config.seed, "interference"),
             {}, {}, {}, {}, 0, -1.0};
  w.controller.water = config.water_pid;
  w.controller.oil = config.oil_pid;
  w.controller.safety = config.safety;
  w.network.blacklist.config = config.blacklist;
  return w;
}

void schedule(SimWorld& world, std::int64_t tick, EventKind kind, EventPayload payload) {
  world.events.push(SimEvent{tick, kind, std::move(payload), 0});
}

void submit_command(SimWorld& world, const OperatorCommand& cmd) {
  schedule(world, world.clock.ticks(), EventKind::kOperatorCommand, cmd);
}

void tick(SimWorld& w) {
  const std::int64_t k = w.clock.ticks();
  const double step = w.clock.step();
  const auto frame = static_cast<std::int64_t>(w.network.superframe.length);

  for (std::size_t i = 0; i < kSensorCount; ++i) {
    const std::int64_t period = ticks_for(w.config.sensors[i].sample_period, step);
    const auto phase = static_cast<std::int64_t>(w.network.superframe.sample_slot[i]) % period;
    if (k % period == phase)
      schedule(w, k, EventKind::kSensorSample, SensorSamplePayload{static_cast<SensorId>(i)});
  }
  if (w.network.superframe.assignments[static_cast<std::size_t>(k % frame)].kind != SlotKind::Idle)
    schedule(w, k, EventKind::kPacketTx, PacketTxPayload{});
  const std::int64_t ctrl = ticks_for(w.config.controller.period, step);
  if (k % ctrl == static_cast<std::int64_t>(w.config.controller_offset_slots) % ctrl)
    schedule(w, k, EventKind::kControllerCycle, ControllerCyclePayload{});

  while (w.events.due(k)) dispatch(w, w.events.pop());

  if (w.network.blacklist.config.enabled) {
    const std::int64_t probe = ticks_for(w.network.blacklist.config.probe_interval, step);
    if (k > 0 && k % probe == 0)
      probe_excluded(w.network.blacklist, w.radio, w.clock.now(), w.interference_rng);
  }

  StepResult r = step_plant(w.plant, w.config.geometry, w.config.params, step);
  w.conservation_diagnostics += r.diagnostics.size();
  w.plant = std::move(r.state);
  w.clock.advance();
}

void run_until(SimWorld& world, double t_end) {
  if (t_end < world.clock.now() - 1e-12) throw RangeError("run_until: t_end precedes now");
  const std::int64_t target = world.clock.tick_at_or_after(t_end);
  while (world.clock.ticks() < target) tick(world);
}

NetworkStats window_stats(const SimWorld& world, double t0, double t1) {
  return network_stats(world.network.packets, t0, t1, world.clock.step());
}

}  // namespace separator
