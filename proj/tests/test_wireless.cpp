#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "separator/wireless.hpp"

using namespace separator;

namespace {

const std::vector<int> kJammed{14, 15, 16, 23, 24, 25};

/// Shortest hop counts to the gateway by exhaustive relaxation over the
/// five-node graph.
std::array<int, kNodeCount> hop_oracle(const LinkQualityMatrix& q, double threshold) {
  std::array<int, kNodeCount> d;
  d.fill(1000);
  d[index_of(NodeId::GW)] = 0;
  for (std::size_t round = 0; round < kNodeCount; ++round)
    for (std::size_t i = 0; i < kNodeCount; ++i)
      for (std::size_t j = 0; j < kNodeCount; ++j)
        if (i != j && std::min(q[i][j], q[j][i]) >= threshold) d[i] = std::min(d[i], d[j] + 1);
  return d;
}

/// Feeds `sensor` readings once per superframe and runs every slot.
MeshNetwork run_network(MeshNetwork net, const RadioEnvironment& env, std::int64_t frames,
                        RngStream& rng) {
  const auto L = static_cast<std::int64_t>(net.superframe.length);
  for (std::int64_t asn = 0; asn < frames * L; ++asn) {
    const std::size_t slot = static_cast<std::size_t>(asn % L);
    for (std::size_t s = 0; s < kSensorCount; ++s)
      if (net.superframe.sample_slot[s] == slot)
        enqueue_reading(net, static_cast<SensorId>(s), SensorReading{}, static_cast<double>(asn) * 0.01);
    transmit_slot(net, env, asn, rng);
  }
  return net;
}

std::vector<AttemptOutcome> outcomes(int channel, std::size_t total, std::size_t good) {
  std::vector<AttemptOutcome> out;
  for (std::size_t i = 0; i < total; ++i) {
    AttemptOutcome o;
    o.channel = channel;
    o.acked = i < good;
    out.push_back(o);
  }
  return out;
}

}  // namespace

TEST_CASE("full mesh routes every sensor straight to the gateway with a peer as backup") {
  const auto q = full_mesh_quality();
  const MeshNetwork net = build_mesh({}, q);
  const auto hops = hop_oracle(q, 0.5);
  for (std::size_t i = 0; i < kSensorCount; ++i) {
    const MeshNode& n = net.nodes[i];
    CHECK(n.neighbours.size() == 4);
    CHECK(n.hops_to_gateway == hops[i]);
    REQUIRE(n.primary);
    CHECK(*n.primary == NodeId::GW);
    REQUIRE(n.secondary);
    CHECK(*n.secondary != NodeId::GW);
    CHECK(*n.secondary != n.id);
  }
}

TEST_CASE("a sensor out of gateway range routes through a peer") {
  // P1 far from the gateway but near P2 and P3.
  std::array<Position, kNodeCount> pos{};
  pos[index_of(NodeId::P1)] = {0.0, 0.0};
  pos[index_of(NodeId::P2)] = {6.0, 0.0};
  pos[index_of(NodeId::P3)] = {0.0, 6.0};
  pos[index_of(NodeId::T)] = {9.0, 6.0};
  pos[index_of(NodeId::GW)] = {13.0, 6.0};
  const auto q = quality_from_positions(pos, 10.0);
  const MeshNetwork net = build_mesh(pos, q);
  const auto hops = hop_oracle(q, 0.5);
  const MeshNode& p1 = net.node(NodeId::P1);
  CHECK(hops[index_of(NodeId::P1)] == 2);
  CHECK(p1.hops_to_gateway == 2);
  REQUIRE(p1.primary);
  CHECK(net.node(*p1.primary).hops_to_gateway == 1);
  for (std::size_t i = 0; i < kSensorCount; ++i) CHECK(net.nodes[i].hops_to_gateway == hops[i]);

  // The schedule carries P1's reading across both hops.
  RadioEnvironment env;
  env.p_link = 1.0;
  RngStream rng(1, "link-noise");
  const MeshNetwork after = run_network(net, env, 3, rng);
  for (const auto& p : after.packets) {
    if (p.origin != NodeId::P1) continue;
    REQUIRE(p.delivered_at);
    CHECK(p.attempts.size() == 2);
  }
}

TEST_CASE("a sensor with one feasible neighbour is a configuration error") {
  auto q = full_mesh_quality();
  for (std::size_t j = 0; j < kNodeCount; ++j)
    if (j != index_of(NodeId::GW)) {
      q[index_of(NodeId::T)][j] = 0.0;
      q[j][index_of(NodeId::T)] = 0.0;
    }
  CHECK_THROWS_AS(build_mesh({}, q), ConfigError);
}

TEST_CASE("hop channel basics") {
  const auto seq = default_hop_sequence();
  Blacklist empty;
  CHECK(hop_channel(0, 0, seq, empty) == seq.front());
  std::set<int> all(seq.begin(), seq.end());
  CHECK(all.size() == 16);
  CHECK(*all.begin() == kFirstChannel);
  CHECK(*all.rbegin() == kLastChannel);

  Blacklist bl;
  for (int ch : kJammed) bl.excluded[Blacklist::slot(ch)] = true;
  const auto usable = static_cast<std::int64_t>(bl.usable_count());
  CHECK(usable == 10);
  for (std::int64_t asn = 0; asn < 5000; ++asn) {
    for (std::int64_t off : {0, 3, 17}) {
      const int ch = hop_channel(asn, off, seq, bl);
      CHECK(std::find(kJammed.begin(), kJammed.end(), ch) == kJammed.end());
      CHECK(ch == hop_channel(asn + usable, off, seq, bl));
    }
  }
}

TEST_CASE("every link uses each usable channel equally over |usable| superframes") {
  MeshNetwork net = build_mesh({}, full_mesh_quality());
  for (bool blacklisted : {false, true}) {
    if (blacklisted)
      for (int ch : kJammed) net.blacklist.excluded[Blacklist::slot(ch)] = true;
    net.packets.clear();
    for (auto& n : net.nodes) n.tx_queue.clear();
    const auto usable = static_cast<std::int64_t>(net.blacklist.usable_count());
    RadioEnvironment env;
    env.p_link = 1.0;
    RngStream rng(2, "link-noise");
    const auto L = static_cast<std::int64_t>(net.superframe.length);
    std::map<std::pair<int, int>, std::map<int, int>> per_link;
    for (std::int64_t asn = 0; asn < usable * L; ++asn) {
      const std::size_t slot = static_cast<std::size_t>(asn % L);
      for (std::size_t s = 0; s < kSensorCount; ++s)
        if (net.superframe.sample_slot[s] == slot)
          enqueue_reading(net, static_cast<SensorId>(s), SensorReading{}, 0.0);
      for (const auto& o : transmit_slot(net, env, asn, rng))
        ++per_link[{static_cast<int>(o.from), static_cast<int>(o.to)}][o.channel];
    }
    REQUIRE(per_link.size() == kSensorCount);
    for (const auto& [link, counts] : per_link) {
      CHECK(static_cast<std::int64_t>(counts.size()) == usable);
      for (const auto& [ch, n] : counts) CHECK(n == 1);
    }
  }
}

TEST_CASE("lossless links deliver every packet on the first attempt") {
  RadioEnvironment env;
  env.p_link = 1.0;
  RngStream rng(1, "link-noise");
  const MeshNetwork net = run_network(build_mesh({}, full_mesh_quality()), env, 100, rng);
  for (const auto& p : net.packets) {
    REQUIRE(p.delivered_at);
    CHECK(p.attempts.size() == 1);
  }
  const NetworkStats s = network_stats(net.packets, 0.0, 100.0);
  CHECK(s.path_stability_pct == 100.0);
  CHECK(s.reliability_pct == 100.0);
  CHECK(s.created == 400);
}

TEST_CASE("per-attempt success at p_link 0.995 over 10,000 attempts") {
  RadioEnvironment env;
  env.p_link = 0.995;
  RngStream rng(1, "link-noise");
  MeshNetwork net = build_mesh({}, full_mesh_quality());
  // Four dedicated attempts per superframe plus retries.
  net = run_network(std::move(net), env, 2500, rng);
  const NetworkStats s = network_stats(net.packets, 0.0, 2500.0);
  REQUIRE(s.attempts >= 10000);
  CHECK(s.path_stability_pct >= 99.3);
  CHECK(s.path_stability_pct <= 99.7);
}

TEST_CASE("jamming intensity maps linearly onto success probability") {
  RadioEnvironment env;
  env.p_link = 0.995;
  env.p_jam = 0.3;
  env.jamming = {{10.0, 20.0, kJammed, 1.0}};
  CHECK(env.success_probability(14, 15.0) == doctest::Approx(0.3));
  CHECK(env.success_probability(14, 5.0) == doctest::Approx(0.995));
  CHECK(env.success_probability(14, 20.0) == doctest::Approx(0.995));
  CHECK(env.success_probability(11, 15.0) == doctest::Approx(0.995));
  env.jamming[0].intensity = 0.5;
  CHECK(env.success_probability(24, 15.0) == doctest::Approx(0.995 + 0.5 * (0.3 - 0.995)));

  RngStream rng(4, "link-noise");
  int ok = 0;
  constexpr int n = 20000;
  env.jamming[0].intensity = 1.0;
  for (int i = 0; i < n; ++i) ok += rng.bernoulli(env.success_probability(14, 15.0));
  const double sigma = std::sqrt(0.3 * 0.7 / n);
  CHECK(std::abs(ok / static_cast<double>(n) - 0.3) < 4.0 * sigma);
}

TEST_CASE("blacklist exclusion rules") {
  Blacklist bl;
  bl.config.window = 50;
  for (int ch = kFirstChannel; ch <= kLastChannel; ++ch) bl = update_blacklist(bl, outcomes(ch, 50, 50));
  CHECK(bl.excluded_channels().empty());

  bl = update_blacklist(bl, outcomes(14, 50, 15));
  CHECK(bl.excluded_channels() == std::vector<int>{14});

  Blacklist partial;
  partial = update_blacklist(partial, outcomes(15, 49, 0));
  CHECK(partial.excluded_channels().empty());
}

TEST_CASE("blacklist keeps a floor of usable channels and says so") {
  Blacklist bl;
  std::vector<AttemptOutcome> all;
  for (int ch = kFirstChannel; ch <= kLastChannel; ++ch) {
    // Channel 11 is the worst, 26 the least bad.
    const auto good = static_cast<std::size_t>(ch - kFirstChannel);
    auto o = outcomes(ch, 50, good);
    all.insert(all.end(), o.begin(), o.end());
  }
  bl = update_blacklist(bl, all);
  CHECK(bl.usable_count() == bl.config.min_usable);
  CHECK_FALSE(bl.diagnostics.empty());
  CHECK(bl.excluded_channels().front() == 11);
  for (int ch = 23; ch <= 26; ++ch) CHECK_FALSE(bl.is_excluded(ch));
}

TEST_CASE("disabled blacklist only keeps statistics") {
  Blacklist bl;
  bl.config.enabled = false;
  bl = update_blacklist(bl, outcomes(14, 50, 0));
  CHECK(bl.excluded_channels().empty());
  CHECK(bl.success_ratio(14) == 0.0);
}

TEST_CASE("excluded channels are re-admitted after consecutive clean probes") {
  Blacklist bl;
  bl = update_blacklist(bl, outcomes(14, 50, 0));
  REQUIRE(bl.is_excluded(14));
  RadioEnvironment clean;
  clean.p_link = 1.0;
  RngStream rng(1, "interference");
  for (std::size_t i = 0; i + 1 < bl.config.readmit_probes; ++i) {
    probe_excluded(bl, clean, 0.0, rng);
    CHECK(bl.is_excluded(14));
  }
  probe_excluded(bl, clean, 0.0, rng);
  CHECK_FALSE(bl.is_excluded(14));
}

TEST_CASE("latency of a one-hop packet in its own dedicated slot") {
  MeshNetwork net = build_mesh({}, full_mesh_quality());
  RadioEnvironment env;
  env.p_link = 1.0;
  RngStream rng(1, "link-noise");
  const std::size_t s = net.superframe.sample_slot[0];
  const auto& a = net.superframe.assignments[s + 1];
  REQUIRE(a.kind == SlotKind::Dedicated);
  REQUIRE(a.tx == NodeId::P1);
  enqueue_reading(net, SensorId::P1, SensorReading{}, static_cast<double>(s) * 0.01);
  for (std::int64_t asn = static_cast<std::int64_t>(s); asn < 100; ++asn) transmit_slot(net, env, asn, rng);
  const NetworkStats st = network_stats(net.packets, 0.0, 1.0);
  REQUIRE(st.latency_ms_mean);
  CHECK(*st.latency_ms_mean == doctest::Approx((0.01 + net.config.airtime) * 1000.0).epsilon(1e-9));
}

TEST_CASE("nothing delivered reports latency as absent") {
  std::vector<Packet> packets(1);
  packets[0].created_at = 0.5;
  const NetworkStats s = network_stats(packets, 0.0, 1.0);
  CHECK_FALSE(s.latency_ms_mean);
  CHECK(s.in_flight == 1);
}

TEST_CASE("retries keep reliability at 100 percent even at p_link 0.7") {
  RadioEnvironment env;
  env.p_link = 0.7;
  RngStream rng(9, "link-noise");
  const MeshNetwork net = run_network(build_mesh({}, full_mesh_quality()), env, 600, rng);
  const NetworkStats s = network_stats(net.packets, 0.0, 590.0);
  CHECK(s.reliability_pct == 100.0);
  CHECK(s.in_flight == 0);
  CHECK(s.path_stability_pct < 80.0);
}

TEST_CASE("no packet arrives sooner than its schedule allows") {
  RadioEnvironment env;
  env.p_link = 0.9;
  RngStream rng(5, "link-noise");
  const MeshNetwork net = run_network(build_mesh({}, full_mesh_quality()), env, 300, rng);
  const double floor = 0.01 + net.config.airtime;
  for (const auto& p : net.packets)
    if (p.delivered_at) CHECK(*p.delivered_at - p.created_at >= floor - 1e-12);
}

TEST_CASE("jammed long-run stability matches the channel-average expectation") {
  RadioEnvironment env;
  env.p_link = 0.995;
  env.p_jam = 0.3;
  env.jamming = {{0.0, 1e9, kJammed, 1.0}};
  RngStream rng(3, "link-noise");
  MeshNetwork net = build_mesh({}, full_mesh_quality());
  net.blacklist.config.enabled = false;
  net = run_network(std::move(net), env, 3200, rng);
  const NetworkStats s = network_stats(net.packets, 0.0, 3200.0);
  const double k = static_cast<double>(kJammed.size());
  const double expected = (k * 0.3 + (16.0 - k) * 0.995) / 16.0;
  const double sigma = std::sqrt(expected * (1.0 - expected) / static_cast<double>(s.attempts));
  CHECK(std::abs(s.path_stability_pct / 100.0 - expected) < 4.0 * sigma);
}

TEST_CASE("enabling the blacklist never lowers long-run stability under steady jamming") {
  RadioEnvironment env;
  env.p_link = 0.995;
  env.p_jam = 0.3;
  env.jamming = {{0.0, 1e9, kJammed, 1.0}};
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    MeshNetwork off = build_mesh({}, full_mesh_quality());
    off.blacklist.config.enabled = false;
    MeshNetwork on = build_mesh({}, full_mesh_quality());
    RngStream r1(seed, "link-noise");
    RngStream r2(seed, "link-noise");
    off = run_network(std::move(off), env, 1200, r1);
    on = run_network(std::move(on), env, 1200, r2);
    CHECK(network_stats(on.packets, 0.0, 1200.0).path_stability_pct >=
          network_stats(off.packets, 0.0, 1200.0).path_stability_pct);
  }
}

TEST_CASE("repeated failures to the primary fail over to the secondary") {
  auto q = full_mesh_quality();
  MeshNetwork net = build_mesh({}, q);
  const NodeId backup = *net.node(NodeId::P1).secondary;
  net.quality[index_of(NodeId::P1)][index_of(NodeId::GW)] = 0.0;
  net.quality[index_of(NodeId::GW)][index_of(NodeId::P1)] = 0.0;
  RadioEnvironment env;
  env.p_link = 1.0;
  RngStream rng(1, "link-noise");
  net = run_network(std::move(net), env, 10, rng);
  CHECK(net.failovers >= 1);
  CHECK(*net.node(NodeId::P1).primary == backup);
  const auto trace = attempt_trace(net.packets);
  CHECK_FALSE(trace.empty());
  const NetworkStats s = network_stats(net.packets, 0.0, 9.0);
  CHECK(s.reliability_pct == 100.0);
}
