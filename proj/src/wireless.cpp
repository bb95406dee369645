#include "separator/wireless.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>

namespace separator {

std::string_view to_string(NodeId id) {
  switch (id) {
    case NodeId::P1: return "P1";
    case NodeId::P2: return "P2";
    case NodeId::P3: return "P3";
    case NodeId::T: return "T";
    case NodeId::GW: return "GW";
  }
  return "?";
}

std::vector<int> default_hop_sequence() {
  return {11, 18, 25, 15, 22, 13, 20, 26, 17, 12, 24, 19, 14, 21, 16, 23};
}

double RadioEnvironment::intensity(int channel, double t) const {
  double level = 0.0;
  auto apply = [&](const JammingWindow& w) {
    if (t < w.start || t >= w.end) return;
    if (std::find(w.channels.begin(), w.channels.end(), channel) != w.channels.end())
      level = std::max(level, w.intensity);
  };
  for (const auto& w : jamming) apply(w);
  if (manual) apply(*manual);
  return std::clamp(level, 0.0, 1.0);
}

double RadioEnvironment::success_probability(int channel, double t) const {
  const double i = intensity(channel, t);
  return std::clamp(p_link + (p_jam - p_link) * i, 0.0, 1.0);
}

double Blacklist::success_ratio(int channel) const {
  const auto& h = history[slot(channel)];
  if (h.empty()) return 1.0;
  return static_cast<double>(std::count(h.begin(), h.end(), true)) / static_cast<double>(h.size());
}

std::size_t Blacklist::usable_count() const {
  return static_cast<std::size_t>(std::count(excluded.begin(), excluded.end(), false));
}

std::vector<int> Blacklist::excluded_channels() const {
  std::vector<int> out;
  for (int ch = kFirstChannel; ch <= kLastChannel; ++ch)
    if (is_excluded(ch)) out.push_back(ch);
  return out;
}

int hop_channel(std::int64_t asn, std::int64_t offset, const std::vector<int>& hop_sequence,
                const Blacklist& blacklist) {
  std::array<int, kChannelCount> usable{};
  std::int64_t n = 0;
  for (int ch : hop_sequence)
    if (!blacklist.is_excluded(ch)) usable[static_cast<std::size_t>(n++)] = ch;
  if (n == 0) throw std::logic_error("hop_channel: no usable channel");
  const std::int64_t idx = ((asn + offset) % n + n) % n;
  return usable[static_cast<std::size_t>(idx)];
}

void record_outcomes(Blacklist& bl, const std::vector<AttemptOutcome>& outcomes) {
  for (const auto& o : outcomes) {
    auto& h = bl.history[Blacklist::slot(o.channel)];
    h.push_back(o.acked);
    while (h.size() > bl.config.window) h.pop_front();
  }
  if (!bl.config.enabled) return;

  std::vector<int> candidates;
  for (int ch = kFirstChannel; ch <= kLastChannel; ++ch) {
    const auto& h = bl.history[Blacklist::slot(ch)];
    if (!bl.is_excluded(ch) && h.size() >= bl.config.window &&
        bl.success_ratio(ch) < bl.config.threshold)
      candidates.push_back(ch);
  }
  std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) {
    return bl.success_ratio(a) < bl.success_ratio(b);
  });
  for (int ch : candidates) {
    if (bl.usable_count() <= bl.config.min_usable) {
      bl.diagnostics.push_back("usable-channel floor reached; retaining channel " +
                               std::to_string(ch));
      continue;
    }
    bl.excluded[Blacklist::slot(ch)] = true;
    bl.clean_probes[Blacklist::slot(ch)] = 0;
  }
}

Blacklist update_blacklist(Blacklist bl, const std::vector<AttemptOutcome>& outcomes) {
  record_outcomes(bl, outcomes);
  return bl;
}

void probe_excluded(Blacklist& bl, const RadioEnvironment& env, double t, RngStream& rng) {
  for (int ch = kFirstChannel; ch <= kLastChannel; ++ch) {
    if (!bl.is_excluded(ch)) continue;
    const std::size_t i = Blacklist::slot(ch);
    if (rng.bernoulli(env.success_probability(ch, t))) {
      if (++bl.clean_probes[i] >= bl.config.readmit_probes) {
        bl.excluded[i] = false;
        bl.clean_probes[i] = 0;
        bl.history[i].clear();
      }
    } else {
      bl.clean_probes[i] = 0;
    }
  }
}

LinkQualityMatrix quality_from_positions(const std::array<Position, kNodeCount>& positions,
                                         double range) {
  LinkQualityMatrix q{};
  for (std::size_t i = 0; i < kNodeCount; ++i)
    for (std::size_t j = 0; j < kNodeCount; ++j) {
      if (i == j) continue;
      const double d = std::hypot(positions[i].x - positions[j].x, positions[i].y - positions[j].y);
      q[i][j] = d <= range ? 1.0 : 0.0;
    }
  return q;
}

LinkQualityMatrix full_mesh_quality() {
  LinkQualityMatrix q{};
  for (std::size_t i = 0; i < kNodeCount; ++i)
    for (std::size_t j = 0; j < kNodeCount; ++j) q[i][j] = i == j ? 0.0 : 1.0;
  return q;
}

namespace {

double link_quality(const LinkQualityMatrix& q, NodeId a, NodeId b) {
  return std::min(q[index_of(a)][index_of(b)], q[index_of(b)][index_of(a)]);
}

void build_schedule(MeshNetwork& net) {
  const std::size_t L = net.config.superframe_length;
  if (L < 20) throw ConfigError("superframe_length must be >= 20 slots");
  Superframe& sf = net.superframe;
  sf.length = L;
  sf.slot_duration = net.config.slot_duration;
  sf.assignments.assign(L, SlotAssignment{});
  const std::size_t quarter = L / kSensorCount;
  for (std::size_t i = 0; i < kSensorCount; ++i) {
    const std::size_t base = i * quarter;
    sf.sample_slot[i] = base;
    // Dedicated uplink along the primary route, one slot per hop.
    NodeId hop = static_cast<NodeId>(i);
    std::size_t s = base + 1;
    while (hop != NodeId::GW && s < base + 5) {
      const NodeId next = *net.node(hop).primary;
      sf.assignments[s++] = {SlotKind::Dedicated, hop, next};
      hop = next;
    }
    for (std::size_t k = base + 5; k < base + quarter; k += 5)
      sf.assignments[k] = {SlotKind::Shared, NodeId::P1, NodeId::GW};
  }
}

}  // namespace

MeshNetwork build_mesh(const std::array<Position, kNodeCount>& positions,
                       const LinkQualityMatrix& quality, const MeshConfig& config) {
  MeshNetwork net;
  net.config = config;
  net.quality = quality;
  net.positions = positions;
  for (std::size_t i = 0; i < kNodeCount; ++i) {
    MeshNode& n = net.nodes[i];
    n.id = static_cast<NodeId>(i);
    n.burst_period = config.burst_period;
    for (std::size_t j = 0; j < kNodeCount; ++j)
      if (i != j && link_quality(quality, n.id, static_cast<NodeId>(j)) >= config.min_link_quality)
        n.neighbours.push_back(static_cast<NodeId>(j));
    if (n.id != NodeId::GW && n.neighbours.size() < 2)
      throw ConfigError("mesh: sensor " + std::string(to_string(n.id)) +
                        " has fewer than two feasible neighbours");
  }

  // Breadth-first hop counts from the gateway.
  std::array<int, kNodeCount> hops;
  hops.fill(-1);
  hops[index_of(NodeId::GW)] = 0;
  std::queue<NodeId> frontier;
  frontier.push(NodeId::GW);
  while (!frontier.empty()) {
    const NodeId cur = frontier.front();
    frontier.pop();
    for (NodeId nb : net.node(cur).neighbours)
      if (hops[index_of(nb)] < 0) {
        hops[index_of(nb)] = hops[index_of(cur)] + 1;
        frontier.push(nb);
      }
  }

  auto better = [&](NodeId self, NodeId a, NodeId b) {
    if (hops[index_of(a)] != hops[index_of(b)]) return hops[index_of(a)] < hops[index_of(b)];
    const double qa = link_quality(quality, self, a);
    const double qb = link_quality(quality, self, b);
    if (qa != qb) return qa > qb;
    if ((a == NodeId::GW) != (b == NodeId::GW)) return a == NodeId::GW;
    return index_of(a) < index_of(b);
  };

  for (std::size_t i = 0; i < kSensorCount; ++i) {
    MeshNode& n = net.nodes[i];
    if (hops[i] < 0)
      throw ConfigError("mesh: sensor " + std::string(to_string(n.id)) + " cannot reach GW");
    n.hops_to_gateway = hops[i];
    std::optional<NodeId> best;
    for (NodeId nb : n.neighbours)
      if (hops[index_of(nb)] == hops[i] - 1 && (!best || better(n.id, nb, *best))) best = nb;
    n.primary = best;
  }
  for (std::size_t i = 0; i < kSensorCount; ++i) {
    MeshNode& n = net.nodes[i];
    std::optional<NodeId> loop_free;
    std::optional<NodeId> any;
    for (NodeId nb : n.neighbours) {
      if (nb == *n.primary) continue;
      if (!any || better(n.id, nb, *any)) any = nb;
      const bool routes_back = nb != NodeId::GW && net.node(nb).primary == n.id;
      if (!routes_back && (!loop_free || better(n.id, nb, *loop_free))) loop_free = nb;
    }
    n.secondary = loop_free ? loop_free : any;
  }
  build_schedule(net);
  return net;
}

std::size_t enqueue_reading(MeshNetwork& net, SensorId sensor, const SensorReading& reading,
                            double now) {
  Packet p;
  p.origin = node_of(sensor);
  p.seq = net.next_seq++;
  p.payload = reading;
  p.created_at = now;
  p.holder = p.origin;
  net.packets.push_back(std::move(p));
  const std::size_t idx = net.packets.size() - 1;
  net.node(node_of(sensor)).tx_queue.push_back(idx);
  return idx;
}

namespace {

bool visited(const Packet& p, NodeId n) {
  if (p.origin == n) return true;
  for (const auto& a : p.attempts)
    if (a.acked && a.to == n) return true;
  return false;
}

NodeId next_hop(const MeshNode& node, const Packet& p) {
  if (node.primary && !visited(p, *node.primary)) return *node.primary;
  if (node.secondary && !visited(p, *node.secondary)) return *node.secondary;
  return node.primary.value_or(NodeId::GW);
}

bool may_retry(const Packet& p, std::int64_t frame, int retries_per_hop) {
  return p.frame_of_last_attempt != frame || p.attempts_this_frame <= retries_per_hop;
}

}  // namespace

std::vector<AttemptOutcome> transmit_slot(MeshNetwork& net, const RadioEnvironment& env,
                                          std::int64_t asn, RngStream& rng) {
  const auto L = static_cast<std::int64_t>(net.superframe.length);
  const std::int64_t frame = asn / L;
  const SlotAssignment& slot = net.superframe.assignments[static_cast<std::size_t>(asn % L)];
  if (slot.kind == SlotKind::Idle) return {};

  std::optional<NodeId> tx;
  if (slot.kind == SlotKind::Dedicated) {
    if (!net.node(slot.tx).tx_queue.empty()) tx = slot.tx;
  } else {
    for (std::size_t k = 0; k < kSensorCount; ++k) {
      const std::size_t cand = (net.shared_cursor + k) % kSensorCount;
      const auto& q = net.nodes[cand].tx_queue;
      if (!q.empty() && may_retry(net.packets[q.front()], frame, net.config.retries_per_hop)) {
        tx = static_cast<NodeId>(cand);
        net.shared_cursor = (cand + 1) % kSensorCount;
        break;
      }
    }
  }
  if (!tx) return {};

  MeshNode& sender = net.node(*tx);
  const std::size_t pidx = sender.tx_queue.front();
  Packet& p = net.packets[pidx];
  const NodeId to = next_hop(sender, p);
  // Each link's channel offset rotates by one per superframe so that a link
  // cycles through every usable channel.
  const std::int64_t offset =
      static_cast<std::int64_t>(index_of(*tx) * kNodeCount + index_of(to)) + frame;
  const int channel = hop_channel(asn, offset, net.hop_sequence, net.blacklist);
  const double t = static_cast<double>(asn) * net.superframe.slot_duration;
  const double ps = env.success_probability(channel, t) * link_quality(net.quality, *tx, to);
  const bool acked = rng.bernoulli(ps);

  if (p.frame_of_last_attempt != frame) {
    p.frame_of_last_attempt = frame;
    p.attempts_this_frame = 0;
  }
  ++p.attempts_this_frame;
  p.attempts.push_back({asn, channel, *tx, to, acked});

  if (acked) {
    sender.consecutive_failures = 0;
    sender.tx_queue.pop_front();
    p.holder = to;
    p.attempts_this_frame = 0;
    p.frame_of_last_attempt = -1;
    if (to == NodeId::GW) {
      p.delivered_at = t + net.config.airtime;
    } else {
      net.node(to).tx_queue.push_back(pidx);
    }
  } else if (++sender.consecutive_failures >= net.config.failover_after && sender.secondary) {
    std::swap(sender.primary, sender.secondary);
    sender.consecutive_failures = 0;
    ++net.failovers;
  }

  std::vector<AttemptOutcome> out{{asn, t, channel, *tx, to, pidx, acked}};
  record_outcomes(net.blacklist, out);
  return out;
}

NetworkStats network_stats(const std::vector<Packet>& packets, double t0, double t1,
                           double slot_duration) {
  NetworkStats s;
  double latency_sum = 0.0;
  for (const auto& p : packets) {
    if (p.created_at >= t0 && p.created_at < t1) {
      ++s.created;
      if (p.delivered_at) {
        ++s.delivered;
        latency_sum += (*p.delivered_at - p.created_at) * 1000.0;
      } else {
        ++s.in_flight;
      }
    }
    for (const auto& a : p.attempts) {
      const double ta = static_cast<double>(a.asn) * slot_duration;
      if (ta >= t0 && ta < t1) {
        ++s.attempts;
        if (a.acked) ++s.acked;
      }
    }
  }
  if (s.delivered > 0) s.latency_ms_mean = latency_sum / static_cast<double>(s.delivered);
  if (s.attempts > 0)
    s.path_stability_pct = 100.0 * static_cast<double>(s.acked) / static_cast<double>(s.attempts);
  const std::size_t settled = s.created - s.in_flight;
  if (settled > 0)
    s.reliability_pct = 100.0 * static_cast<double>(s.delivered) / static_cast<double>(settled);
  return s;
}

std::vector<AttemptRecord> attempt_trace(const std::vector<Packet>& packets) {
  std::vector<AttemptRecord> out;
  for (const auto& p : packets)
    for (const auto& a : p.attempts)
      out.push_back({p.seq, p.origin, p.created_at, a.asn, a.channel, a.from, a.to, a.acked});
  return out;
}

}  // namespace separator
