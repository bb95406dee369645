// Clock, random streams and event ordering shared by every subsystem.
#pragma once

#include <cstdint>
#include <queue>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "separator/types.hpp"

namespace separator {

/// Fixed-step simulation clock. Time is derived from the integer tick count,
/// never accumulated, so `now()` after N ticks is exactly N * step.
class SimClock {
 public:
  explicit SimClock(double step = 0.01);

  double now() const { return static_cast<double>(ticks_) * step_; }
  double step() const { return step_; }
  std::int64_t ticks() const { return ticks_; }
  /// Absolute slot number; one slot per tick.
  std::int64_t slot_index() const { return ticks_; }

  void advance() { ++ticks_; }
  /// First tick index whose time is >= t.
  std::int64_t tick_at_or_after(double t) const;

 private:
  double step_;
  std::int64_t ticks_ = 0;
};

/// Named, independently seeded random stream.
///
/// Built on mt19937_64 (whose output sequence is fixed by the standard) with
/// hand-rolled uniform and normal transforms, so draws are bit-identical
/// across standard libraries.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view stream_id);

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal via Box-Muller (cached second variate).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t seed() const { return seed_; }
  const std::string& stream_id() const { return stream_id_; }

 private:
  std::uint64_t seed_;
  std::string stream_id_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

// ---------------------------------------------------------------------------
// Events

enum class EventKind : std::uint8_t {
  kSafetyTrip = 0,
  kOperatorCommand = 1,
  kSensorSample = 2,
  kPacketTx = 3,
  kControllerCycle = 4,
};

std::string_view to_string(EventKind kind);

struct SafetyTripPayload {
  std::string reason;
};
struct SensorSamplePayload {
  SensorId sensor;
};
struct PacketTxPayload {};
struct ControllerCyclePayload {};

using EventPayload = std::variant<SafetyTripPayload, OperatorCommand, SensorSamplePayload,
                                  PacketTxPayload, ControllerCyclePayload>;

struct SimEvent {
  std::int64_t tick = 0;
  EventKind kind = EventKind::kPacketTx;
  EventPayload payload = PacketTxPayload{};
  /// Insertion order; breaks ties between events of the same kind and tick.
  std::uint64_t seq = 0;
};

/// Min-queue ordered by (tick, kind, insertion order). Kinds at equal ticks
/// are processed safety-trip, operator-command, sensor-sample, packet-tx,
/// controller-cycle.
class EventQueue {
 public:
  void push(SimEvent ev);
  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }
  /// True when the earliest event is due at or before `tick`.
  bool due(std::int64_t tick) const { return !heap_.empty() && heap_.top().tick <= tick; }
  SimEvent pop();

 private:
  struct Later {
    bool operator()(const SimEvent& a, const SimEvent& b) const;
  };
  std::priority_queue<SimEvent, std::vector<SimEvent>, Later> heap_;
  std::uint64_t next_seq_ = 0;
};

/// Raised when integration produces a non-finite state.
class SimulationError : public std::runtime_error {
 public:
  SimulationError(const std::string& what, std::string state_dump)
      : std::runtime_error(what), state_dump_(std::move(state_dump)) {}
  const std::string& state_dump() const { return state_dump_; }

 private:
  std::string state_dump_;
};

}  // namespace separator
