#include "separator/sim_kernel.hpp"

#include <cmath>

namespace separator {

SimClock::SimClock(double step) : step_(step) {
  if (!(step > 0.0) || !std::isfinite(step)) throw RangeError("clock step must be > 0");
}

std::int64_t SimClock::tick_at_or_after(double t) const {
  auto k = static_cast<std::int64_t>(std::ceil(t / step_ - 1e-9));
  return k < 0 ? 0 : k;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {
std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}
}  // namespace

RngStream::RngStream(std::uint64_t seed, std::string_view stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(splitmix64(seed ^ splitmix64(fnv1a(stream_id)))) {}

double RngStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * 3.14159265358979323846 * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::kSafetyTrip: return "safety-trip";
    case EventKind::kOperatorCommand: return "operator-command";
    case EventKind::kSensorSample: return "sensor-sample";
    case EventKind::kPacketTx: return "packet-tx";
    case EventKind::kControllerCycle: return "controller-cycle";
  }
  return "unknown";
}

bool EventQueue::Later::operator()(const SimEvent& a, const SimEvent& b) const {
  if (a.tick != b.tick) return a.tick > b.tick;
  if (a.kind != b.kind) return a.kind > b.kind;
  return a.seq > b.seq;
}

void EventQueue::push(SimEvent ev) {
  ev.seq = next_seq_++;
  heap_.push(std::move(ev));
}

SimEvent EventQueue::pop() {
  SimEvent ev = heap_.top();
  heap_.pop();
  return ev;
}

}  // namespace separator
