#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "trafficlm/bytes.hpp"
#include "trafficlm/error.hpp"
#include "trafficlm/pcap.hpp"

namespace trafficlm {

struct Endpoint {
  std::uint32_t addr = 0;
  std::uint16_t port = 0;
  auto operator<=>(const Endpoint&) const = default;
};

/// Direction-free flow identity: endpoint_a <= endpoint_b, compared as
/// big-endian address bytes then port.
struct FlowKey {
  Endpoint endpoint_a;
  Endpoint endpoint_b;
  std::uint8_t protocol = 0;
  auto operator<=>(const FlowKey&) const = default;

  static FlowKey of(const Packet& p) {
    Endpoint s{p.ip.src_addr, p.src_port()};
    Endpoint d{p.ip.dst_addr, p.dst_port()};
    if (d < s) std::swap(s, d);
    return {s, d, p.ip.protocol};
  }
};

struct Flow {
  FlowKey key;
  std::vector<Packet> packets;
  std::optional<std::int32_t> label;
  std::optional<double> target;
};

/// A maximal run of same-direction packets inside a flow. The view borrows
/// from the parent flow's packet vector.
struct Burst {
  std::span<const Packet> packets;
  std::size_t offset = 0;  // index of the first packet in the parent flow

  Direction direction() const { return packets.front().direction; }
  std::size_t size() const { return packets.size(); }
};

struct FlowConfig {
  std::int64_t idle_timeout_us = 64'000'000;
  std::size_t max_packets = 1024;
};

struct AssembleStats {
  std::size_t dropped_no_transport = 0;
  std::size_t timeout_cuts = 0;
  std::size_t length_cuts = 0;
};

struct AssembleResult {
  std::vector<Flow> flows;
  AssembleStats stats;
};

/// Groups packets into bidirectional flows by canonical key. A flow is cut
/// when the idle gap exceeds the timeout or it reaches max_packets. Output is
/// ordered by each flow's first packet; directions are relative to that
/// packet.
inline AssembleResult assemble_flows(std::vector<Packet> packets, const FlowConfig& config = {}) {
  std::stable_sort(packets.begin(), packets.end(),
                   [](const Packet& a, const Packet& b) { return a.timestamp_us < b.timestamp_us; });
  AssembleResult out;
  std::map<FlowKey, std::size_t> active;
  for (auto& p : packets) {
    if (!p.has_ports()) {
      ++out.stats.dropped_no_transport;
      continue;
    }
    const FlowKey key = FlowKey::of(p);
    auto it = active.find(key);
    if (it != active.end()) {
      Flow& f = out.flows[it->second];
      if (p.timestamp_us - f.packets.back().timestamp_us > config.idle_timeout_us) {
        ++out.stats.timeout_cuts;
        active.erase(it);
        it = active.end();
      } else if (f.packets.size() >= config.max_packets) {
        ++out.stats.length_cuts;
        active.erase(it);
        it = active.end();
      }
    }
    if (it == active.end()) {
      it = active.emplace(key, out.flows.size()).first;
      out.flows.push_back(Flow{key, {}, std::nullopt, std::nullopt});
    }
    Flow& f = out.flows[it->second];
    if (f.packets.empty()) {
      p.direction = Direction::forward;
    } else {
      const Packet& first = f.packets.front();
      const bool same = p.ip.src_addr == first.ip.src_addr && p.src_port() == first.src_port() &&
                        p.ip.dst_addr == first.ip.dst_addr && p.dst_port() == first.dst_port();
      p.direction = same ? Direction::forward : Direction::reverse;
    }
    f.packets.push_back(std::move(p));
  }
  return out;
}

inline std::vector<Burst> segment_bursts(const Flow& flow) {
  if (flow.packets.empty()) throw Error(ErrorCode::EmptyFlow, "cannot segment an empty flow");
  std::vector<Burst> out;
  std::span<const Packet> all(flow.packets);
  std::size_t start = 0;
  for (std::size_t i = 1; i <= all.size(); ++i) {
    if (i == all.size() || all[i].direction != all[start].direction) {
      out.push_back(Burst{all.subspan(start, i - start), start});
      start = i;
    }
  }
  return out;
}

/// Maps addresses to pseudonyms in 10.0.0.0/8. The n-th distinct address
/// seen gets host number (k + n) mod 2^24, where k is derived from the salt,
/// so the mapping is a bijection on the observed set and stable per salt.
class Anonymizer {
 public:
  explicit Anonymizer(ByteView salt) {
    const std::string digest = sha256_hex(salt);
    offset_ = static_cast<std::uint32_t>(std::stoul(digest.substr(0, 6), nullptr, 16));
  }

  std::uint32_t pseudonym(std::uint32_t addr) {
    auto [it, inserted] = table_.try_emplace(addr, 0);
    if (inserted) {
      it->second = ipv4(10, 0, 0, 0) | ((offset_ + static_cast<std::uint32_t>(table_.size() - 1)) & 0xFFFFFF);
    }
    return it->second;
  }

  Packet apply(const Packet& in) {
    Packet p = in;
    p.ip.src_addr = pseudonym(in.ip.src_addr);
    p.ip.dst_addr = pseudonym(in.ip.dst_addr);
    const std::size_t ip = p.ip_offset;
    detail::wr32(p.link_bytes, ip + 12, p.ip.src_addr);
    detail::wr32(p.link_bytes, ip + 16, p.ip.dst_addr);
    detail::wr16(p.link_bytes, ip + 10, 0);
    p.ip.checksum = internet_checksum(p.ip_header_bytes());
    detail::wr16(p.link_bytes, ip + 10, p.ip.checksum);
    if (auto* t = std::get_if<TcpHeader>(&p.transport)) {
      t->checksum = 0;
      detail::wr16(p.link_bytes, p.transport_offset + 16, 0);
    } else if (auto* u = std::get_if<UdpHeader>(&p.transport)) {
      u->checksum = 0;
      detail::wr16(p.link_bytes, p.transport_offset + 6, 0);
    }
    return p;
  }

  Flow apply(const Flow& in) {
    Flow out;
    out.label = in.label;
    out.target = in.target;
    out.packets.reserve(in.packets.size());
    for (const auto& p : in.packets) out.packets.push_back(apply(p));
    out.key = out.packets.empty() ? in.key : FlowKey::of(out.packets.front());
    return out;
  }

  const std::map<std::uint32_t, std::uint32_t>& table() const { return table_; }

 private:
  std::uint32_t offset_ = 0;
  std::map<std::uint32_t, std::uint32_t> table_;
};

inline Flow anonymize(const Flow& flow, ByteView salt) {
  Anonymizer anon(salt);
  return anon.apply(flow);
}

struct PacketMetadata {
  std::uint32_t size_bytes = 0;
  std::int64_t inter_arrival_us = 0;
  Direction direction = Direction::forward;
};

struct FlowMetadata {
  std::vector<PacketMetadata> packets;
  std::uint64_t total_volume_bytes = 0;
};

inline FlowMetadata extract_metadata(const Flow& flow) {
  if (flow.packets.empty()) throw Error(ErrorCode::EmptyFlow, "no packets to describe");
  FlowMetadata m;
  std::int64_t prev = flow.packets.front().timestamp_us;
  for (const auto& p : flow.packets) {
    m.packets.push_back({p.ip.total_length, p.timestamp_us - prev, p.direction});
    m.total_volume_bytes += p.ip.total_length;
    prev = p.timestamp_us;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Flow store: "TFLW" container
//
//   magic "TFLW", u8 version (1), u32 flow count, then per flow a u32 record
//   length followed by the record:
//     u8 protocol, u32 addr_a, u16 port_a, u32 addr_b, u16 port_b,
//     u8 has_label, i32 label, u8 has_target, f64 target, u32 packet count,
//     per packet: i64 timestamp_us, u8 direction, u32 frame length, frame.
//   All integers little-endian.

inline constexpr std::uint8_t kFlowStoreVersion = 1;

inline Bytes save_flow_store(std::span<const Flow> flows) {
  ByteWriter w;
  w.str("TFLW");
  w.u8(kFlowStoreVersion);
  w.u32le(static_cast<std::uint32_t>(flows.size()));
  for (const auto& f : flows) {
    ByteWriter r;
    r.u8(f.key.protocol);
    r.u32le(f.key.endpoint_a.addr);
    r.u16le(f.key.endpoint_a.port);
    r.u32le(f.key.endpoint_b.addr);
    r.u16le(f.key.endpoint_b.port);
    r.u8(f.label.has_value());
    r.i32le(f.label.value_or(0));
    r.u8(f.target.has_value());
    r.f64le(f.target.value_or(0.0));
    r.u32le(static_cast<std::uint32_t>(f.packets.size()));
    for (const auto& p : f.packets) {
      r.i64le(p.timestamp_us);
      r.u8(static_cast<std::uint8_t>(p.direction));
      r.u32le(static_cast<std::uint32_t>(p.link_bytes.size()));
      r.bytes(p.link_bytes);
    }
    w.u32le(static_cast<std::uint32_t>(r.size()));
    w.bytes(r.buffer());
  }
  return w.take();
}

inline std::vector<Flow> load_flow_store(ByteView data) {
  ByteReader r(data, ErrorCode::CorruptTable);
  if (data.size() < 4 || r.str(4) != "TFLW") throw Error(ErrorCode::BadMagic, "not a flow store");
  if (r.u8() != kFlowStoreVersion) throw Error(ErrorCode::VersionMismatch, "flow store version");
  const std::uint32_t n = r.u32le();
  std::vector<Flow> flows;
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t len = r.u32le();
    ByteReader rec(r.take(len), ErrorCode::CorruptTable);
    Flow f;
    f.key.protocol = rec.u8();
    f.key.endpoint_a = {rec.u32le(), rec.u16le()};
    f.key.endpoint_b = {rec.u32le(), rec.u16le()};
    const bool has_label = rec.u8();
    const std::int32_t label = rec.i32le();
    const bool has_target = rec.u8();
    const double target = rec.f64le();
    if (has_label) f.label = label;
    if (has_target) f.target = target;
    const std::uint32_t count = rec.u32le();
    for (std::uint32_t k = 0; k < count; ++k) {
      const std::int64_t ts = rec.i64le();
      const auto dir = static_cast<Direction>(rec.u8() & 1);
      const std::uint32_t flen = rec.u32le();
      auto frame = rec.take(flen);
      auto parsed = parse_ethernet_frame(Bytes(frame.begin(), frame.end()), ts);
      if (!parsed.packet) throw Error(ErrorCode::CorruptTable, "stored frame does not parse");
      parsed.packet->direction = dir;
      f.packets.push_back(std::move(*parsed.packet));
    }
    flows.push_back(std::move(f));
  }
  return flows;
}

inline std::string flow_summary_csv(std::span<const Flow> flows) {
  std::ostringstream out;
  out << "flow_index,protocol,addr_a,port_a,addr_b,port_b,packets,bytes,start_us,duration_us,label,target\n";
  for (std::size_t i = 0; i < flows.size(); ++i) {
    const Flow& f = flows[i];
    std::uint64_t bytes = 0;
    for (const auto& p : f.packets) bytes += p.ip.total_length;
    const std::int64_t start = f.packets.empty() ? 0 : f.packets.front().timestamp_us;
    const std::int64_t dur = f.packets.empty() ? 0 : f.packets.back().timestamp_us - start;
    out << i << ',' << int(f.key.protocol) << ',' << format_ipv4(f.key.endpoint_a.addr) << ','
        << f.key.endpoint_a.port << ',' << format_ipv4(f.key.endpoint_b.addr) << ',' << f.key.endpoint_b.port << ','
        << f.packets.size() << ',' << bytes << ',' << start << ',' << dur << ',';
    if (f.label) out << *f.label;
    out << ',';
    if (f.target) out << *f.target;
    out << '\n';
  }
  return out.str();
}

}  // namespace trafficlm
