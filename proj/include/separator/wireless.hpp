// WirelessHART-style mesh: four sensor nodes and a gateway on a TDMA
// superframe, channel hopping over the sixteen 2.4 GHz 802.15.4 channels,
// per-hop acknowledged retries, route failover, channel blacklisting, and
// the latency / path-stability / reliability statistics.
//
// The PHY is abstracted to a per-attempt success probability that depends on
// the hopped channel's interference intensity.
#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "separator/plant.hpp"
#include "separator/sim_kernel.hpp"

namespace separator {

enum class NodeId : std::uint8_t { P1 = 0, P2 = 1, P3 = 2, T = 3, GW = 4 };
inline constexpr std::size_t kNodeCount = 5;
inline constexpr std::size_t kSensorCount = 4;

std::string_view to_string(NodeId id);
inline NodeId node_of(SensorId s) { return static_cast<NodeId>(static_cast<std::uint8_t>(s)); }
inline std::size_t index_of(NodeId n) { return static_cast<std::size_t>(n); }

inline constexpr int kFirstChannel = 11;
inline constexpr int kLastChannel = 26;
inline constexpr int kChannelCount = 16;

/// Default hop sequence: a fixed permutation of channels 11..26.
std::vector<int> default_hop_sequence();

/// Interference burst on a set of channels.
struct JammingWindow {
  double start = 0.0;
  double end = 0.0;
  std::vector<int> channels;
  double intensity = 1.0;  // [0, 1]
};

struct RadioEnvironment {
  double p_link = 0.995;  // per-attempt success, clean channel
  double p_jam = 0.3;     // per-attempt success at intensity 1
  std::vector<JammingWindow> jamming;
  /// Live override set by an operator (start/stop jamming).
  std::optional<JammingWindow> manual;

  /// Highest intensity of any active window on `channel` at time t.
  double intensity(int channel, double t) const;
  /// p_link at intensity 0, p_jam at 1, linear in between, clamped to [0, 1].
  double success_probability(int channel, double t) const;
};

struct BlacklistConfig {
  bool enabled = true;
  std::size_t window = 50;          // attempts per channel
  double threshold = 0.60;          // windowed success ratio
  std::size_t min_usable = 4;
  double probe_interval = 10.0;     // s between probes of an excluded channel
  std::size_t readmit_probes = 5;   // consecutive clean probes to re-admit
};

/// Per-channel sliding-window statistics and the exclusion set.
struct Blacklist {
  BlacklistConfig config;
  std::array<std::deque<bool>, kChannelCount> history{};
  std::array<bool, kChannelCount> excluded{};
  std::array<std::size_t, kChannelCount> clean_probes{};
  std::vector<std::string> diagnostics;

  static std::size_t slot(int channel) { return static_cast<std::size_t>(channel - kFirstChannel); }
  bool is_excluded(int channel) const { return excluded[slot(channel)]; }
  double success_ratio(int channel) const;
  std::size_t usable_count() const;
  std::vector<int> excluded_channels() const;
};

/// Channel for a transmission: the usable subsequence of `hop_sequence`
/// (excluded channels removed, order kept) indexed by (asn + offset) mod size.
int hop_channel(std::int64_t asn, std::int64_t offset, const std::vector<int>& hop_sequence,
                const Blacklist& blacklist);

struct AttemptOutcome {
  std::int64_t asn = 0;
  double time = 0.0;
  int channel = kFirstChannel;
  NodeId from = NodeId::P1;
  NodeId to = NodeId::GW;
  std::size_t packet = 0;  // index into MeshNetwork::packets
  bool acked = false;
};

/// Records the outcomes into the sliding windows and re-evaluates exclusions.
Blacklist update_blacklist(Blacklist bl, const std::vector<AttemptOutcome>& outcomes);
/// In-place form used on the simulation hot path.
void record_outcomes(Blacklist& bl, const std::vector<AttemptOutcome>& outcomes);

/// One probe of each excluded channel; re-admits after enough clean probes.
void probe_excluded(Blacklist& bl, const RadioEnvironment& env, double t, RngStream& rng);

struct Attempt {
  std::int64_t asn = 0;
  int channel = kFirstChannel;
  NodeId from = NodeId::P1;
  NodeId to = NodeId::GW;
  bool acked = false;
};

struct Packet {
  NodeId origin = NodeId::P1;
  std::uint64_t seq = 0;
  SensorReading payload;
  double created_at = 0.0;
  std::optional<double> delivered_at;
  std::vector<Attempt> attempts;
  NodeId holder = NodeId::P1;
  /// Attempts on the current hop within `frame_of_last_attempt`.
  int attempts_this_frame = 0;
  std::int64_t frame_of_last_attempt = -1;
};

struct MeshNode {
  NodeId id = NodeId::P1;
  std::vector<NodeId> neighbours;
  std::optional<NodeId> primary;
  std::optional<NodeId> secondary;
  int hops_to_gateway = 0;
  std::deque<std::size_t> tx_queue;  // packet indices
  double burst_period = 1.0;
  int consecutive_failures = 0;
};

enum class SlotKind : std::uint8_t { Idle, Dedicated, Shared };

struct SlotAssignment {
  SlotKind kind = SlotKind::Idle;
  NodeId tx = NodeId::P1;
  NodeId rx = NodeId::GW;
};

struct Superframe {
  std::size_t length = 100;
  double slot_duration = 0.01;
  std::vector<SlotAssignment> assignments;
  /// Slot (within the frame) at which each sensor takes its burst sample.
  std::array<std::size_t, kSensorCount> sample_slot{};
};

struct MeshConfig {
  double min_link_quality = 0.5;  // feasibility threshold
  int failover_after = 8;         // consecutive failed attempts to a next hop
  int retries_per_hop = 3;        // per superframe
  double airtime = 0.004256;      // s, 133-byte frame at 250 kbit/s
  std::size_t superframe_length = 100;
  double slot_duration = 0.01;
  double burst_period = 1.0;
};

using LinkQualityMatrix = std::array<std::array<double, kNodeCount>, kNodeCount>;

struct Position {
  double x = 0.0;
  double y = 0.0;
};

/// Quality 1 within `range` metres, 0 beyond.
LinkQualityMatrix quality_from_positions(const std::array<Position, kNodeCount>& positions,
                                         double range);

/// Fully connected five-node mesh with perfect links.
LinkQualityMatrix full_mesh_quality();

struct MeshNetwork {
  MeshConfig config;
  LinkQualityMatrix quality{};
  std::array<Position, kNodeCount> positions{};
  std::array<MeshNode, kNodeCount> nodes{};
  Superframe superframe;
  std::vector<int> hop_sequence = default_hop_sequence();
  Blacklist blacklist;
  std::vector<Packet> packets;
  std::uint64_t next_seq = 0;
  std::size_t shared_cursor = 0;
  double last_probe = 0.0;
  std::size_t failovers = 0;

  MeshNode& node(NodeId id) { return nodes[index_of(id)]; }
  const MeshNode& node(NodeId id) const { return nodes[index_of(id)]; }
};

/// Builds neighbour sets, shortest-hop primary routes, loop-free secondary
/// next hops and the superframe schedule. Throws ConfigError when a sensor
/// has fewer than two feasible neighbours or no route to the gateway.
MeshNetwork build_mesh(const std::array<Position, kNodeCount>& positions,
                       const LinkQualityMatrix& quality, const MeshConfig& config = {});

/// Queues a freshly sampled reading at its origin node; returns its index.
std::size_t enqueue_reading(MeshNetwork& net, SensorId sensor, const SensorReading& reading,
                            double now);

/// Executes the slot for `asn`: at most one attempt. Successful hops advance
/// the packet; arrivals at the gateway set delivered_at. Failed attempts
/// leave the packet queued for a shared retry slot (or the next superframe
/// once the per-hop budget is spent). Updates blacklist statistics and
/// failover counters.
std::vector<AttemptOutcome> transmit_slot(MeshNetwork& net, const RadioEnvironment& env,
                                          std::int64_t asn, RngStream& rng);

struct NetworkStats {
  std::optional<double> latency_ms_mean;  // absent when nothing was delivered
  double path_stability_pct = 100.0;
  double reliability_pct = 100.0;
  std::size_t attempts = 0;
  std::size_t acked = 0;
  std::size_t created = 0;
  std::size_t delivered = 0;
  std::size_t in_flight = 0;
};

/// Statistics over [t0, t1): latency and reliability over packets created in
/// the window, path stability over attempts made in it. Packets still in
/// flight at t1 count toward neither delivered nor lost.
NetworkStats network_stats(const std::vector<Packet>& packets, double t0, double t1,
                           double slot_duration = 0.01);

/// Flat per-attempt trace of every packet, ordered by packet then attempt.
struct AttemptRecord {
  std::uint64_t seq = 0;
  NodeId origin = NodeId::P1;
  double created_at = 0.0;
  std::int64_t asn = 0;
  int channel = kFirstChannel;
  NodeId from = NodeId::P1;
  NodeId to = NodeId::GW;
  bool acked = false;
};
std::vector<AttemptRecord> attempt_trace(const std::vector<Packet>& packets);

}  // namespace separator
