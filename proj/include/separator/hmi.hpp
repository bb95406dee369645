// Operator workplace backend core: a wall-clock-paced simulation owned by
// one thread, talking to the outside only through a command queue and a
// latest-snapshot slot. Transport lives in hmi_server.hpp.
#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "json.hpp"
#include "separator/world.hpp"

namespace separator {

/// Everything an operator sees, taken from a single tick.
struct StateSnapshot {
  std::int64_t tick = 0;
  double time = 0.0;
  double water_level = 0.0;  // percent, left compartment water layer
  double oil_level = 0.0;    // percent, right compartment
  double left_total = 0.0;   // percent
  std::array<double, 5> valves{};  // positions, indexed by ValveId
  bool pump_running = false;
  double setpoint_water = 0.0;
  double setpoint_oil = 0.0;
  bool water_manual = false;
  bool oil_manual = false;
  std::vector<std::string> active_alarms;
  bool latched = false;
  bool jamming = false;
  NetworkStats network;  // trailing window
  double feed_pressure = 0.0;  // kPa
  double oil_temp = 0.0;       // degC
  /// Levels as the controller sees them through the gateway cache.
  std::optional<double> measured_water_level;
  std::optional<double> measured_oil_level;
};

StateSnapshot take_snapshot(const SimWorld& world, double network_window = 60.0);
nlohmann::json snapshot_to_json(const StateSnapshot& s);

struct Ack {
  std::string command_id;
  std::string kind;
  bool accepted = false;
  std::string reason;
  double sim_time = 0.0;  // when the command took effect (or was refused)
};

/// Wire form: {"type":"ack","command_id":..,"kind":..,"args":{"accepted":..,"reason":..}}.
nlohmann::json ack_to_json(const Ack& ack);
nlohmann::json snapshot_message(const StateSnapshot& s);
nlohmann::json error_message(const std::string& command_id, const std::string& reason);

/// Parses {"type":"command","command_id":..,"kind":..,"args":{..}}. Range and
/// identifier checks happen here; the returned string is the rejection reason.
std::variant<OperatorCommand, std::string> parse_command(const nlohmann::json& msg);

struct AuditEntry {
  double wall_time = 0.0;  // seconds since the service started
  double sim_time = 0.0;
  std::string event;       // "command" or "ack"
  std::string command_id;
  std::string kind;
  nlohmann::json args;
  bool accepted = false;
  std::string reason;
};

/// Append-only record of every command and ack; optionally mirrored to a
/// JSON-lines file.
class AuditLog {
 public:
  explicit AuditLog(std::string path = {});
  void append(AuditEntry entry);
  std::vector<AuditEntry> entries() const;

 private:
  mutable std::mutex mutex_;
  std::vector<AuditEntry> entries_;
  std::string path_;
};

struct LiveOptions {
  double pace = 1.0;                 // simulated seconds per wall second
  double publish_interval = 0.2;     // wall seconds
  double network_window = 60.0;      // s of simulated time in snapshot stats
  std::string audit_path;
};

/// A command as it entered the simulation, for replay.
struct AppliedCommand {
  std::int64_t tick = 0;
  OperatorCommand command;
};

class LiveSimulation {
 public:
  using AckCallback = std::function<void(const Ack&)>;
  using SnapshotCallback = std::function<void(std::shared_ptr<const StateSnapshot>)>;

  LiveSimulation(const WorldConfig& config, LiveOptions options = {});
  ~LiveSimulation();
  LiveSimulation(const LiveSimulation&) = delete;
  LiveSimulation& operator=(const LiveSimulation&) = delete;

  /// Starts the paced simulation thread.
  void start();
  void stop();
  bool running() const { return running_; }

  /// Validates and queues a command for the next tick. `on_ack` is invoked
  /// exactly once: immediately for malformed or duplicate input, otherwise
  /// from the simulation thread once the command has been applied.
  void handle_command(const nlohmann::json& msg, AckCallback on_ack);
  void handle_command(const OperatorCommand& cmd, AckCallback on_ack);

  std::shared_ptr<const StateSnapshot> latest() const;
  std::size_t subscribe(SnapshotCallback cb);
  void unsubscribe(std::size_t id);

  /// Manual stepping when the thread is not running (tests, replay).
  void step(std::int64_t ticks);
  void publish_now();

  std::vector<AppliedCommand> command_log() const;
  const AuditLog& audit() const { return audit_; }
  double wall_seconds() const;

  /// Runs a fresh world with the recorded commands re-applied at their ticks.
  static SimWorld replay(const WorldConfig& config, const std::vector<AppliedCommand>& log,
                         std::int64_t until_tick);

 private:
  struct Pending {
    OperatorCommand cmd;
    AckCallback on_ack;
  };

  void run();
  void drain_commands();
  void advance_one();

  WorldConfig config_;
  LiveOptions options_;
  SimWorld world_;
  AuditLog audit_;
  std::chrono::steady_clock::time_point started_;

  mutable std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::deque<Pending> queue_;
  std::set<std::string> seen_ids_;

  mutable std::mutex snapshot_mutex_;
  std::shared_ptr<const StateSnapshot> latest_;
  std::map<std::size_t, SnapshotCallback> subscribers_;
  std::size_t next_subscriber_ = 1;

  mutable std::mutex log_mutex_;
  std::vector<AppliedCommand> applied_;

  std::atomic<bool> running_{false};
  std::atomic<bool> stop_{false};
  std::thread thread_;
};

}  // namespace separator
