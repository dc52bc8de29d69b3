#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include "trafficlm/error.hpp"
#include "trafficlm/flow.hpp"
#include "trafficlm/pcap.hpp"
#include "trafficlm/rng.hpp"

namespace trafficlm {

/// Integer distribution for synthetic packet fields.
struct IntDistribution {
  enum class Kind { constant, uniform, choice };
  Kind kind = Kind::constant;
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  std::vector<std::int64_t> values;
  std::vector<double> weights;

  static IntDistribution constant(std::int64_t v) { return {Kind::constant, v, v, {}, {}}; }
  static IntDistribution uniform(std::int64_t lo, std::int64_t hi) { return {Kind::uniform, lo, hi, {}, {}}; }
  static IntDistribution choice(std::vector<std::int64_t> values, std::vector<double> weights = {}) {
    if (weights.empty()) weights.assign(values.size(), 1.0);
    IntDistribution d{Kind::choice, 0, 0, std::move(values), std::move(weights)};
    d.lo = d.values.empty() ? 0 : *std::min_element(d.values.begin(), d.values.end());
    d.hi = d.values.empty() ? 0 : *std::max_element(d.values.begin(), d.values.end());
    return d;
  }

  bool valid() const {
    switch (kind) {
      case Kind::constant: return true;
      case Kind::uniform: return lo <= hi;
      case Kind::choice: {
        if (values.empty() || values.size() != weights.size()) return false;
        double total = 0;
        for (double w : weights) {
          if (!(w >= 0)) return false;
          total += w;
        }
        return total > 0;
      }
    }
    return false;
  }

  std::int64_t sample(Rng& rng) const {
    switch (kind) {
      case Kind::constant: return lo;
      case Kind::uniform: return rng.range(lo, hi);
      case Kind::choice: {
        const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
        double u = rng.uniform() * total;
        for (std::size_t i = 0; i < values.size(); ++i) {
          if (u < weights[i]) return values[i];
          u -= weights[i];
        }
        return values.back();
      }
    }
    return lo;
  }
};

/// Traffic profile of one class in a synthetic trace.
struct ClassProfile {
  std::string name;
  std::int32_t label = 0;
  std::size_t n_flows = 1;
  std::uint8_t protocol = kProtoTcp;
  IntDistribution server_port = IntDistribution::constant(443);
  IntDistribution packets_per_flow = IntDistribution::constant(5);
  IntDistribution payload_size = IntDistribution::uniform(0, 200);
  IntDistribution ttl = IntDistribution::constant(64);
  IntDistribution inter_arrival_us = IntDistribution::uniform(100, 5000);
  double reverse_probability = 0.5;
  /// TCP only: the first three packets are SYN, SYN/ACK, ACK without payload.
  bool tcp_handshake = false;
  /// Written into each data packet's payload at one of the slots, picked
  /// uniformly per packet. Slots past the payload end are skipped.
  Bytes signature;
  std::vector<std::size_t> signature_slots;
  /// Constant payload fill byte; negative means uniformly random bytes.
  int payload_fill = -1;
  /// Bytes written at the start of every data payload of a flow, drawn once
  /// per flow (a connection identifier).
  std::size_t flow_tag_bytes = 0;
};

struct SynthSpec {
  std::vector<ClassProfile> classes;
  std::int64_t start_us = 1'700'000'000'000'000;
  std::int64_t flow_gap_us = 2000;  // start offset between consecutive flows
  bool interleave_classes = true;
};

struct FlowTruth {
  FlowKey key;
  std::int64_t start_us = 0;
  std::int32_t label = 0;
  std::size_t packets = 0;
  std::uint64_t volume_bytes = 0;
};

struct SyntheticTrace {
  std::vector<Packet> packets;
  std::vector<FlowTruth> flows;  // in start order
};

inline void validate(const SynthSpec& spec) {
  if (spec.classes.empty()) throw Error(ErrorCode::BadSpec, "no classes");
  for (const auto& c : spec.classes) {
    const std::string who = "class '" + c.name + "': ";
    if (c.n_flows == 0) throw Error(ErrorCode::BadSpec, who + "n_flows must be positive");
    if (c.protocol != kProtoTcp && c.protocol != kProtoUdp) throw Error(ErrorCode::BadSpec, who + "protocol");
    for (const auto* d : {&c.server_port, &c.packets_per_flow, &c.payload_size, &c.ttl, &c.inter_arrival_us}) {
      if (!d->valid()) throw Error(ErrorCode::BadSpec, who + "malformed distribution");
    }
    if (c.packets_per_flow.lo < 1) throw Error(ErrorCode::BadSpec, who + "packets_per_flow must be >= 1");
    if (c.payload_size.lo < 0 || c.payload_size.hi > 1400) throw Error(ErrorCode::BadSpec, who + "payload_size");
    if (c.ttl.lo < 0 || c.ttl.hi > 255) throw Error(ErrorCode::BadSpec, who + "ttl outside [0,255]");
    if (c.server_port.lo < 0 || c.server_port.hi > 65535) throw Error(ErrorCode::BadSpec, who + "server_port");
    if (c.inter_arrival_us.lo < 0) throw Error(ErrorCode::BadSpec, who + "negative inter-arrival");
    if (!(c.reverse_probability >= 0 && c.reverse_probability <= 1)) {
      throw Error(ErrorCode::BadSpec, who + "reverse_probability");
    }
    if (c.tcp_handshake && c.protocol != kProtoTcp) throw Error(ErrorCode::BadSpec, who + "handshake needs TCP");
    if (!c.signature.empty() && c.signature_slots.empty()) throw Error(ErrorCode::BadSpec, who + "signature slots");
    if (c.payload_fill > 255) throw Error(ErrorCode::BadSpec, who + "payload_fill");
  }
}

/// Deterministic packet stream for the given profiles. Flows get unique
/// client endpoints, so assembling the stream recovers exactly one flow per
/// generated flow.
inline SyntheticTrace synth_trace(const SynthSpec& spec, std::uint64_t seed) {
  validate(spec);
  Rng rng(seed);

  std::vector<std::size_t> order;  // class index per flow
  for (std::size_t c = 0; c < spec.classes.size(); ++c) order.insert(order.end(), spec.classes[c].n_flows, c);
  if (spec.interleave_classes) rng.shuffle(order.begin(), order.end());
  if (order.size() > 60000) throw Error(ErrorCode::BadSpec, "at most 60000 flows per trace");

  struct Tagged {
    std::int64_t ts;
    std::size_t flow;
    std::size_t index;
    Packet packet;
  };
  std::vector<Tagged> all;
  SyntheticTrace trace;

  for (std::size_t g = 0; g < order.size(); ++g) {
    const ClassProfile& cls = spec.classes[order[g]];
    const std::uint32_t client = ipv4(192, 168, static_cast<std::uint8_t>(g >> 8), static_cast<std::uint8_t>(g & 0xFF));
    const auto client_port = static_cast<std::uint16_t>(10000 + g);
    const std::uint32_t server =
        ipv4(172, 16, static_cast<std::uint8_t>(rng.below(256)), static_cast<std::uint8_t>(1 + rng.below(254)));
    const auto server_port = static_cast<std::uint16_t>(cls.server_port.sample(rng));
    const auto n_packets = static_cast<std::size_t>(cls.packets_per_flow.sample(rng));
    Bytes tag(cls.flow_tag_bytes);
    for (auto& b : tag) b = static_cast<std::uint8_t>(rng.below(256));

    std::int64_t ts = spec.start_us + static_cast<std::int64_t>(g) * spec.flow_gap_us;
    std::uint32_t seq_c = static_cast<std::uint32_t>(rng.next());
    std::uint32_t seq_s = static_cast<std::uint32_t>(rng.next());
    FlowTruth truth;
    truth.start_us = ts;
    truth.label = cls.label;
    truth.packets = n_packets;

    for (std::size_t i = 0; i < n_packets; ++i) {
      if (i > 0) ts += cls.inter_arrival_us.sample(rng);
      PacketBlueprint bp;
      bp.timestamp_us = ts;
      bp.protocol = cls.protocol;
      bp.ttl = static_cast<std::uint8_t>(cls.ttl.sample(rng));
      bp.ip_id = static_cast<std::uint16_t>(rng.below(65536));
      bool from_client = true;
      bool data = true;
      if (cls.tcp_handshake && i < 3) {
        data = false;
        from_client = i != 1;
        bp.tcp_flags = i == 0 ? tcp_flags::syn : (i == 1 ? (tcp_flags::syn | tcp_flags::ack) : tcp_flags::ack);
        if (i < 2) bp.tcp_options = {0x02, 0x04, 0x05, 0xb4, 0x04, 0x02, 0x08, 0x0a, 0, 0, 0, 0, 0, 0, 0, 0, 0x01, 0x03, 0x03, 0x07};
      } else {
        from_client = i == 0 || !rng.bernoulli(cls.reverse_probability);
        bp.tcp_flags = tcp_flags::psh | tcp_flags::ack;
      }
      bp.src_addr = from_client ? client : server;
      bp.dst_addr = from_client ? server : client;
      bp.src_port = from_client ? client_port : server_port;
      bp.dst_port = from_client ? server_port : client_port;
      bp.seq = from_client ? seq_c : seq_s;
      bp.ack = from_client ? seq_s : seq_c;
      if (data) {
        const auto size = static_cast<std::size_t>(cls.payload_size.sample(rng));
        bp.payload.resize(size);
        for (auto& b : bp.payload) {
          b = cls.payload_fill >= 0 ? static_cast<std::uint8_t>(cls.payload_fill) : static_cast<std::uint8_t>(rng.below(256));
        }
        std::copy_n(tag.begin(), std::min(tag.size(), size), bp.payload.begin());
        if (!cls.signature.empty()) {
          const std::size_t slot = cls.signature_slots[rng.below(cls.signature_slots.size())];
          for (std::size_t k = 0; k < cls.signature.size() && slot + k < size; ++k) bp.payload[slot + k] = cls.signature[k];
        }
      }
      const auto seg = static_cast<std::uint32_t>(bp.payload.size() + ((bp.tcp_flags & tcp_flags::syn) ? 1 : 0));
      (from_client ? seq_c : seq_s) += seg;
      Packet p = build_packet(bp);
      truth.volume_bytes += p.ip.total_length;
      if (i == 0) truth.key = FlowKey::of(p);
      all.push_back({ts, g, i, std::move(p)});
    }
    trace.flows.push_back(truth);
  }

  std::stable_sort(all.begin(), all.end(), [](const Tagged& a, const Tagged& b) {
    return std::tie(a.ts, a.flow, a.index) < std::tie(b.ts, b.flow, b.index);
  });
  trace.packets.reserve(all.size());
  for (auto& t : all) trace.packets.push_back(std::move(t.packet));
  return trace;
}

/// Copies ground-truth labels and volumes onto assembled flows, matching by
/// key and start time. Returns the number of flows labeled.
inline std::size_t label_flows(std::vector<Flow>& flows, const std::vector<FlowTruth>& truth) {
  std::map<std::pair<FlowKey, std::int64_t>, const FlowTruth*> index;
  for (const auto& t : truth) index[{t.key, t.start_us}] = &t;
  std::size_t n = 0;
  for (auto& f : flows) {
    if (f.packets.empty()) continue;
    auto it = index.find({f.key, f.packets.front().timestamp_us});
    if (it == index.end()) continue;
    f.label = it->second->label;
    f.target = static_cast<double>(it->second->volume_bytes);
    ++n;
  }
  return n;
}

// ---------------------------------------------------------------------------
// Presets

namespace detail {

inline void split_flows(SynthSpec& spec, std::size_t total) {
  const std::size_t k = spec.classes.size();
  if (total < k) throw Error(ErrorCode::BadSpec, "fewer flows than classes");
  for (std::size_t c = 0; c < k; ++c) spec.classes[c].n_flows = total / k + (c < total % k ? 1 : 0);
}

inline std::vector<std::size_t> aligned_slots(std::size_t stride, std::size_t last) {
  std::vector<std::size_t> s;
  for (std::size_t i = 0; i <= last; i += stride) s.push_back(i);
  return s;
}

}  // namespace detail

namespace detail {

inline ClassProfile profile(std::string name, std::int32_t label) {
  ClassProfile p;
  p.name = std::move(name);
  p.label = label;
  return p;
}

}  // namespace detail

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"mixed", "classes4", "volume", "fields", "fields-constant", "handshake", "origin"};
  return names;
}

/// Named synthetic corpora with n_flows flows in total.
///   mixed            4 classes differing in protocol, port, TTL and sizes
///   classes4         4 classes that differ only in an 8-byte payload motif
///                    (equal byte sums) placed at random 8-aligned offsets
///   volume           UDP flows of 8 packets with widely varying sizes
///   fields           2 classes of UDP flows with distinct TTL and length laws
///   fields-constant  like fields with every TTL equal to 64
///   handshake        TCP flows opening with SYN, SYN/ACK, ACK
///   origin           16 profiles with distinct fill bytes and per-flow tags
inline SynthSpec preset_spec(const std::string& name, std::size_t n_flows) {
  using D = IntDistribution;
  SynthSpec spec;
  if (name == "mixed") {
    auto web = detail::profile("web", 0);
    web.server_port = D::constant(443);
    web.packets_per_flow = D::uniform(4, 12);
    web.payload_size = D::uniform(100, 600);
    web.tcp_handshake = true;
    auto dns = detail::profile("dns", 1);
    dns.protocol = kProtoUdp;
    dns.server_port = D::constant(53);
    dns.packets_per_flow = D::uniform(2, 4);
    dns.payload_size = D::uniform(30, 120);
    dns.ttl = D::choice({64, 128});
    auto iot = detail::profile("iot", 2);
    iot.protocol = kProtoUdp;
    iot.server_port = D::constant(1883);
    iot.packets_per_flow = D::uniform(3, 8);
    iot.payload_size = D::uniform(10, 60);
    iot.ttl = D::constant(255);
    iot.payload_fill = 0x5a;
    auto bulk = detail::profile("bulk", 3);
    bulk.server_port = D::constant(8080);
    bulk.packets_per_flow = D::uniform(6, 16);
    bulk.payload_size = D::uniform(800, 1400);
    bulk.ttl = D::constant(128);
    spec.classes = {web, dns, iot, bulk};
  } else if (name == "classes4") {
    const std::vector<Bytes> motifs{
        {0xff, 0xff, 0xff, 0xff, 0x00, 0x00, 0x00, 0x00},
        {0x00, 0x00, 0x00, 0x00, 0xff, 0xff, 0xff, 0xff},
        {0xff, 0x00, 0xff, 0x00, 0xff, 0x00, 0xff, 0x00},
        {0x00, 0xff, 0xff, 0x00, 0x00, 0xff, 0xff, 0x00},
    };
    for (std::int32_t c = 0; c < 4; ++c) {
      auto p = detail::profile("motif" + std::to_string(c), c);
      p.packets_per_flow = D::uniform(5, 8);
      p.payload_size = D::uniform(200, 240);
      p.signature = motifs[static_cast<std::size_t>(c)];
      p.signature_slots = detail::aligned_slots(8, 192);
      spec.classes.push_back(p);
    }
  } else if (name == "volume") {
    const std::int64_t lo[] = {0, 150, 400, 900};
    const std::int64_t hi[] = {150, 400, 900, 1400};
    for (std::int32_t c = 0; c < 4; ++c) {
      auto p = detail::profile("size" + std::to_string(c), c);
      p.protocol = kProtoUdp;
      p.server_port = D::constant(9000);
      p.packets_per_flow = D::constant(8);
      p.payload_size = D::uniform(lo[c], hi[c]);
      spec.classes.push_back(p);
    }
  } else if (name == "fields" || name == "fields-constant") {
    auto a = detail::profile("fields0", 0);
    a.protocol = kProtoUdp;
    a.server_port = D::constant(5000);
    a.packets_per_flow = D::uniform(3, 6);
    a.payload_size = D::uniform(20, 180);
    a.ttl = D::choice({64, 128, 255}, {0.6, 0.3, 0.1});
    a.inter_arrival_us = D::uniform(100, 20000);
    auto b = detail::profile("fields1", 1);
    b.protocol = kProtoUdp;
    b.server_port = D::constant(5001);
    b.packets_per_flow = D::uniform(3, 6);
    b.payload_size = D::uniform(300, 600);
    b.ttl = D::choice({32, 64});
    b.inter_arrival_us = D::uniform(1000, 100000);
    if (name == "fields-constant") a.ttl = b.ttl = D::constant(64);
    spec.classes = {a, b};
  } else if (name == "handshake") {
    auto p = detail::profile("handshake", 0);
    p.packets_per_flow = D::uniform(4, 8);
    p.payload_size = D::uniform(50, 300);
    p.tcp_handshake = true;
    spec.classes = {p};
  } else if (name == "origin") {
    for (std::int32_t c = 0; c < 16; ++c) {
      auto p = detail::profile("origin" + std::to_string(c), c % 8);
      p.protocol = kProtoUdp;
      p.server_port = D::constant(7000 + c);
      p.packets_per_flow = D::uniform(8, 12);
      p.payload_size = D::uniform(16, 48);
      p.payload_fill = 16 * c + 7;
      p.flow_tag_bytes = 4;
      p.reverse_probability = 0.1;
      spec.classes.push_back(p);
    }
  } else {
    throw Error(ErrorCode::BadSpec, "unknown preset '" + name + "'");
  }
  detail::split_flows(spec, n_flows);
  return spec;
}

/// synth_trace, assembly and labeling in one step.
inline std::vector<Flow> synth_flows(const SynthSpec& spec, std::uint64_t seed, const FlowConfig& config = {}) {
  SyntheticTrace trace = synth_trace(spec, seed);
  auto flows = assemble_flows(std::move(trace.packets), config).flows;
  label_flows(flows, trace.flows);
  return flows;
}

}  // namespace trafficlm
