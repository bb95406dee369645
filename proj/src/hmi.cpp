#include "separator/hmi.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace separator {

using nlohmann::json;

namespace {

std::string fmt(double v) {
  std::ostringstream out;
  out << v;
  return out.str();
}

std::optional<std::string> range_problem(const OperatorCommand& cmd, double level_trip) {
  switch (cmd.kind) {
    case CommandKind::SetValve:
      if (!(cmd.value >= 0.0 && cmd.value <= 100.0))
        return "valve percent " + fmt(cmd.value) + " outside [0, 100]";
      break;
    case CommandKind::SetSetpoint:
      if (!(cmd.value > 0.0 && cmd.value < level_trip))
        return "setpoint " + fmt(cmd.value) + " outside (0, " + fmt(level_trip) + ")";
      break;
    case CommandKind::StartJamming:
      if (!(cmd.value >= 0.0 && cmd.value <= 100.0))
        return "jamming intensity " + fmt(cmd.value) + " outside [0, 100]";
      break;
    default:
      break;
  }
  return std::nullopt;
}

json command_args(const OperatorCommand& cmd) {
  switch (cmd.kind) {
    case CommandKind::SetValve:
      return {{"valve", to_string(cmd.valve)}, {"percent", cmd.value}};
    case CommandKind::SetSetpoint:
      return {{"loop", to_string(cmd.loop)}, {"percent", cmd.value}};
    case CommandKind::StartJamming:
      return {{"percent", cmd.value}};
    default:
      return json::object();
  }
}

}  // namespace

StateSnapshot take_snapshot(const SimWorld& w, double network_window) {
  const auto& g = w.config.geometry;
  StateSnapshot s;
  s.tick = w.clock.ticks();
  s.time = w.clock.now();
  s.water_level = level_percent(w.plant, g, LevelKind::LeftWater);
  s.oil_level = level_percent(w.plant, g, LevelKind::RightOil);
  s.left_total = level_percent(w.plant, g, LevelKind::LeftTotal);
  for (ValveId v : kAllValves) s.valves[static_cast<std::size_t>(v)] = w.plant.valve(v).position;
  s.pump_running = w.plant.pump_running;
  s.setpoint_water = w.controller.water.setpoint;
  s.setpoint_oil = w.controller.oil.setpoint;
  s.water_manual = w.controller.water_manual.has_value();
  s.oil_manual = w.controller.oil_manual.has_value();
  s.active_alarms = w.controller.active_alarms;
  s.latched = w.controller.safety.latched;
  s.jamming = w.radio.manual.has_value();
  for (const auto& j : w.radio.jamming) s.jamming = s.jamming || (s.time >= j.start && s.time < j.end);
  s.network = window_stats(w, std::max(0.0, s.time - network_window), s.time);
  s.feed_pressure = w.plant.feedline_pressure;
  s.oil_temp = w.plant.oil_temp;
  const ProcessView view = decode_cache(w.cache, w.config.controller);
  s.measured_water_level = view.water_level;
  s.measured_oil_level = view.oil_level;
  return s;
}

json snapshot_to_json(const StateSnapshot& s) {
  json valves = json::object();
  for (ValveId v : kAllValves) valves[std::string(to_string(v))] = s.valves[static_cast<std::size_t>(v)];
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"tick", s.tick},
          {"time", s.time},
          {"water_level", s.water_level},
          {"oil_level", s.oil_level},
          {"left_total", s.left_total},
          {"measured_water_level", opt(s.measured_water_level)},
          {"measured_oil_level", opt(s.measured_oil_level)},
          {"valves", valves},
          {"pump_running", s.pump_running},
          {"setpoints", {{"water", s.setpoint_water}, {"oil", s.setpoint_oil}}},
          {"manual", {{"water", s.water_manual}, {"oil", s.oil_manual}}},
          {"alarms", s.active_alarms},
          {"latched", s.latched},
          {"jamming", s.jamming},
          {"feed_pressure", s.feed_pressure},
          {"oil_temp", s.oil_temp},
          {"network",
           {{"latency_ms", opt(s.network.latency_ms_mean)},
            {"path_stability_pct", s.network.path_stability_pct},
            {"reliability_pct", s.network.reliability_pct},
            {"delivered", s.network.delivered},
            {"in_flight", s.network.in_flight}}}};
}

json ack_to_json(const Ack& a) {
  return {{"type", "ack"},
          {"command_id", a.command_id},
          {"kind", a.kind},
          {"args", {{"accepted", a.accepted}, {"reason", a.reason}, {"sim_time", a.sim_time}}}};
}

json snapshot_message(const StateSnapshot& s) {
  return {{"type", "snapshot"}, {"snapshot", snapshot_to_json(s)}};
}

json error_message(const std::string& command_id, const std::string& reason) {
  return {{"type", "error"}, {"command_id", command_id}, {"kind", "error"}, {"args", {{"reason", reason}}}};
}

std::variant<OperatorCommand, std::string> parse_command(const json& msg) {
  if (!msg.is_object()) return std::string("message must be a JSON object");
  if (msg.value("type", "") != "command") return std::string("type must be \"command\"");
  if (!msg.contains("command_id") || !msg.at("command_id").is_string() ||
      msg.at("command_id").get<std::string>().empty())
    return std::string("command_id must be a non-empty string");
  if (!msg.contains("kind") || !msg.at("kind").is_string()) return std::string("kind must be a string");
  const std::string kind_name = msg.at("kind").get<std::string>();
  const auto kind = command_kind_from_string(kind_name);
  if (!kind) return "unknown command kind '" + kind_name + "'";
  const json args = msg.contains("args") ? msg.at("args") : json::object();
  if (!args.is_object()) return std::string("args must be an object");

  OperatorCommand cmd;
  cmd.kind = *kind;
  cmd.command_id = msg.at("command_id").get<std::string>();
  auto percent = [&](const char* key) -> std::optional<double> {
    if (!args.contains(key) || !args.at(key).is_number()) return std::nullopt;
    return args.at(key).get<double>();
  };
  switch (cmd.kind) {
    case CommandKind::SetValve: {
      if (!args.contains("valve") || !args.at("valve").is_string())
        return std::string("set_valve requires args.valve");
      const std::string name = args.at("valve").get<std::string>();
      const auto valve = valve_from_string(name);
      if (!valve) return "unknown valve '" + name + "'";
      const auto p = percent("percent");
      if (!p) return std::string("set_valve requires numeric args.percent");
      cmd.valve = *valve;
      cmd.value = *p;
      break;
    }
    case CommandKind::SetSetpoint: {
      if (!args.contains("loop") || !args.at("loop").is_string())
        return std::string("set_setpoint requires args.loop");
      const std::string name = args.at("loop").get<std::string>();
      const auto loop = loop_from_string(name);
      if (!loop) return "unknown loop '" + name + "'";
      const auto p = percent("percent");
      if (!p) return std::string("set_setpoint requires numeric args.percent");
      cmd.loop = *loop;
      cmd.value = *p;
      break;
    }
    case CommandKind::StartJamming:
      cmd.value = percent("percent").value_or(100.0);
      break;
    default:
      break;
  }
  if (auto problem = range_problem(cmd, SafetyConfig{}.level_trip)) return *problem;
  return cmd;
}

AuditLog::AuditLog(std::string path) : path_(std::move(path)) {}

void AuditLog::append(AuditEntry e) {
  std::lock_guard lock(mutex_);
  if (!path_.empty()) {
    std::ofstream out(path_, std::ios::app);
    out << json{{"wall_time", e.wall_time},
                {"sim_time", e.sim_time},
                {"event", e.event},
                {"command_id", e.command_id},
                {"kind", e.kind},
                {"args", e.args},
                {"accepted", e.accepted},
                {"reason", e.reason}}
               .dump()
        << '\n';
  }
  entries_.push_back(std::move(e));
}

std::vector<AuditEntry> AuditLog::entries() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

LiveSimulation::LiveSimulation(const WorldConfig& config, LiveOptions options)
    : config_(config),
      options_(std::move(options)),
      world_(make_world(config)),
      audit_(options_.audit_path),
      started_(std::chrono::steady_clock::now()) {
  if (!(options_.pace > 0.0)) throw ConfigError("pace must be > 0");
  if (!(options_.publish_interval > 0.0)) throw ConfigError("publish interval must be > 0");
  latest_ = std::make_shared<const StateSnapshot>(take_snapshot(world_, options_.network_window));
}

LiveSimulation::~LiveSimulation() { stop(); }

double LiveSimulation::wall_seconds() const {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
}

void LiveSimulation::start() {
  if (running_) return;
  stop_ = false;
  running_ = true;
  thread_ = std::thread([this] { run(); });
}

void LiveSimulation::stop() {
  if (!running_) return;
  stop_ = true;
  queue_cv_.notify_all();
  if (thread_.joinable()) thread_.join();
  running_ = false;
}

void LiveSimulation::handle_command(const json& msg, AckCallback on_ack) {
  auto parsed = parse_command(msg);
  if (auto* reason = std::get_if<std::string>(&parsed)) {
    Ack ack;
    ack.command_id = msg.is_object() ? msg.value("command_id", std::string{}) : std::string{};
    ack.kind = msg.is_object() ? msg.value("kind", std::string{}) : std::string{};
    ack.reason = *reason;
    ack.sim_time = latest()->time;
    audit_.append({wall_seconds(), ack.sim_time, "command", ack.command_id, ack.kind,
                   msg.is_object() ? msg.value("args", json::object()) : json::object(), false,
                   *reason});
    audit_.append({wall_seconds(), ack.sim_time, "ack", ack.command_id, ack.kind, json::object(),
                   false, *reason});
    on_ack(ack);
    return;
  }
  handle_command(std::get<OperatorCommand>(parsed), std::move(on_ack));
}

void LiveSimulation::handle_command(const OperatorCommand& in, AckCallback on_ack) {
  OperatorCommand cmd = in;
  cmd.issued_at = wall_seconds();
  const std::string kind(to_string(cmd.kind));
  const double sim_now = latest()->time;
  audit_.append({cmd.issued_at, sim_now, "command", cmd.command_id, kind, command_args(cmd), false, {}});

  std::optional<std::string> problem = range_problem(cmd, config_.safety.level_trip);
  if (!problem && cmd.command_id.empty()) problem = "command_id must be a non-empty string";
  if (!problem) {
    std::lock_guard lock(queue_mutex_);
    if (!seen_ids_.insert(cmd.command_id).second) problem = "duplicate command_id";
    else queue_.push_back({cmd, std::move(on_ack)});
  }
  if (problem) {
    Ack ack{cmd.command_id, kind, false, *problem, sim_now};
    audit_.append({wall_seconds(), sim_now, "ack", cmd.command_id, kind, json::object(), false, *problem});
    on_ack(ack);
    return;
  }
  queue_cv_.notify_all();
}

std::shared_ptr<const StateSnapshot> LiveSimulation::latest() const {
  std::lock_guard lock(snapshot_mutex_);
  return latest_;
}

std::size_t LiveSimulation::subscribe(SnapshotCallback cb) {
  std::lock_guard lock(snapshot_mutex_);
  const std::size_t id = next_subscriber_++;
  subscribers_.emplace(id, std::move(cb));
  return id;
}

void LiveSimulation::unsubscribe(std::size_t id) {
  std::lock_guard lock(snapshot_mutex_);
  subscribers_.erase(id);
}

std::vector<AppliedCommand> LiveSimulation::command_log() const {
  std::lock_guard lock(log_mutex_);
  return applied_;
}

void LiveSimulation::drain_commands() {
  std::deque<Pending> batch;
  {
    std::lock_guard lock(queue_mutex_);
    batch.swap(queue_);
  }
  if (batch.empty()) return;
  const std::size_t before = world_.command_log.size();
  std::vector<AckCallback> callbacks;
  for (auto& p : batch) {
    submit_command(world_, p.cmd);
    {
      std::lock_guard lock(log_mutex_);
      applied_.push_back({world_.clock.ticks(), p.cmd});
    }
    callbacks.push_back(std::move(p.on_ack));
  }
  ::separator::tick(world_);
  // Commands at one tick are applied in submission order.
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const CommandRecord& rec = world_.command_log[before + i];
    Ack ack{rec.command_id, std::string(to_string(rec.kind)), rec.accepted, rec.reason, rec.applied_at};
    audit_.append({wall_seconds(), rec.applied_at, "ack", ack.command_id, ack.kind, json::object(),
                   ack.accepted, ack.reason});
    if (callbacks[i]) callbacks[i](ack);
  }
}

void LiveSimulation::advance_one() {
  bool pending = false;
  {
    std::lock_guard lock(queue_mutex_);
    pending = !queue_.empty();
  }
  if (pending) drain_commands();
  else ::separator::tick(world_);
}

void LiveSimulation::step(std::int64_t ticks) {
  if (running_) throw std::logic_error("step() while the live thread is running");
  for (std::int64_t i = 0; i < ticks; ++i) advance_one();
}

void LiveSimulation::publish_now() {
  auto snap = std::make_shared<const StateSnapshot>(take_snapshot(world_, options_.network_window));
  std::vector<SnapshotCallback> targets;
  {
    std::lock_guard lock(snapshot_mutex_);
    latest_ = snap;
    for (const auto& [_, cb] : subscribers_) targets.push_back(cb);
  }
  for (const auto& cb : targets) cb(snap);
}

void LiveSimulation::run() {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const std::int64_t tick0 = world_.clock.ticks();
  const double step = world_.clock.step();
  auto next_publish = t0;
  const auto publish_every = std::chrono::duration_cast<clock::duration>(
      std::chrono::duration<double>(options_.publish_interval));
  try {
    while (!stop_) {
      const double elapsed = std::chrono::duration<double>(clock::now() - t0).count();
      const auto target = tick0 + static_cast<std::int64_t>(std::floor(elapsed * options_.pace / step));
      while (!stop_ && world_.clock.ticks() < target) advance_one();
      const auto now = clock::now();
      if (now >= next_publish) {
        publish_now();
        next_publish += publish_every;
        if (next_publish < now) next_publish = now + publish_every;
      }
      const auto next_tick_wall =
          t0 + std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(
                   static_cast<double>(world_.clock.ticks() + 1 - tick0) * step / options_.pace));
      std::unique_lock lock(queue_mutex_);
      queue_cv_.wait_until(lock, std::min(next_tick_wall, next_publish),
                           [this] { return stop_.load(); });
    }
  } catch (const std::exception& e) {
    audit_.append({wall_seconds(), world_.clock.now(), "fault", {}, {}, json::object(), false, e.what()});
  }
}

SimWorld LiveSimulation::replay(const WorldConfig& config, const std::vector<AppliedCommand>& log,
                                std::int64_t until_tick) {
  SimWorld w = make_world(config);
  for (const auto& a : log) schedule(w, a.tick, EventKind::kOperatorCommand, a.command);
  while (w.clock.ticks() < until_tick) tick(w);
  return w;
}

}  // namespace separator
