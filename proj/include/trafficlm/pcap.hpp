#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "trafficlm/bytes.hpp"
#include "trafficlm/error.hpp"

namespace trafficlm {

enum class Direction : std::uint8_t { forward = 0, reverse = 1 };

inline constexpr std::uint8_t kProtoIcmp = 1;
inline constexpr std::uint8_t kProtoTcp = 6;
inline constexpr std::uint8_t kProtoUdp = 17;

struct Ipv4Header {
  std::uint8_t version = 4;
  std::uint8_t header_length = 20;  // bytes
  std::uint8_t tos = 0;
  std::uint16_t total_length = 0;
  std::uint16_t id = 0;
  std::uint16_t flags_fragment = 0;
  std::uint8_t ttl = 64;
  std::uint8_t protocol = 0;
  std::uint16_t checksum = 0;
  std::uint32_t src_addr = 0;  // host order
  std::uint32_t dst_addr = 0;
};

namespace tcp_flags {
inline constexpr std::uint8_t fin = 0x01;
inline constexpr std::uint8_t syn = 0x02;
inline constexpr std::uint8_t rst = 0x04;
inline constexpr std::uint8_t psh = 0x08;
inline constexpr std::uint8_t ack = 0x10;
}  // namespace tcp_flags

struct TcpHeader {
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint32_t seq = 0;
  std::uint32_t ack = 0;
  std::uint8_t header_length = 20;  // bytes, including options
  std::uint8_t flags = 0;
  std::uint16_t window = 0;
  std::uint16_t checksum = 0;
  std::uint16_t urgent = 0;
};

struct UdpHeader {
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint16_t length = 0;
  std::uint16_t checksum = 0;
};

struct OpaqueTransport {};

using TransportHeader = std::variant<OpaqueTransport, TcpHeader, UdpHeader>;

/// One captured IPv4 frame with its parsed headers. Header and payload
/// accessors are views into link_bytes.
struct Packet {
  std::int64_t timestamp_us = 0;
  Direction direction = Direction::forward;
  Bytes link_bytes;
  std::size_t ip_offset = 0;
  Ipv4Header ip;
  TransportHeader transport;
  std::size_t transport_offset = 0;
  std::size_t transport_header_length = 0;
  std::size_t payload_offset = 0;
  std::size_t payload_length = 0;

  bool is_tcp() const { return std::holds_alternative<TcpHeader>(transport); }
  bool is_udp() const { return std::holds_alternative<UdpHeader>(transport); }
  bool has_ports() const { return is_tcp() || is_udp(); }

  std::uint16_t src_port() const {
    if (auto* t = std::get_if<TcpHeader>(&transport)) return t->src_port;
    if (auto* u = std::get_if<UdpHeader>(&transport)) return u->src_port;
    return 0;
  }
  std::uint16_t dst_port() const {
    if (auto* t = std::get_if<TcpHeader>(&transport)) return t->dst_port;
    if (auto* u = std::get_if<UdpHeader>(&transport)) return u->dst_port;
    return 0;
  }

  ByteView ip_header_bytes() const { return ByteView(link_bytes).subspan(ip_offset, ip.header_length); }
  ByteView transport_header_bytes() const {
    return ByteView(link_bytes).subspan(transport_offset, transport_header_length);
  }
  /// IP header followed by the transport header.
  ByteView header_bytes() const {
    return ByteView(link_bytes).subspan(ip_offset, payload_offset - ip_offset);
  }
  /// Transport header followed by the payload.
  ByteView transport_segment() const {
    return ByteView(link_bytes).subspan(transport_offset, payload_offset + payload_length - transport_offset);
  }
  ByteView payload() const { return ByteView(link_bytes).subspan(payload_offset, payload_length); }
};

inline std::string format_ipv4(std::uint32_t addr) {
  return std::to_string(addr >> 24) + "." + std::to_string((addr >> 16) & 0xFF) + "." +
         std::to_string((addr >> 8) & 0xFF) + "." + std::to_string(addr & 0xFF);
}

inline constexpr std::uint32_t ipv4(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d) {
  return (std::uint32_t{a} << 24) | (std::uint32_t{b} << 16) | (std::uint32_t{c} << 8) | d;
}

inline std::uint16_t internet_checksum(ByteView data) {
  std::uint32_t sum = 0;
  for (std::size_t i = 0; i + 1 < data.size(); i += 2) sum += (std::uint32_t{data[i]} << 8) | data[i + 1];
  if (data.size() % 2) sum += std::uint32_t{data.back()} << 8;
  while (sum >> 16) sum = (sum & 0xFFFF) + (sum >> 16);
  return static_cast<std::uint16_t>(~sum);
}

namespace detail {

inline std::uint16_t rd16(ByteView b, std::size_t off) {
  return static_cast<std::uint16_t>((b[off] << 8) | b[off + 1]);
}
inline std::uint32_t rd32(ByteView b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         b[off + 3];
}
inline void wr16(Bytes& b, std::size_t off, std::uint16_t v) {
  b[off] = static_cast<std::uint8_t>(v >> 8);
  b[off + 1] = static_cast<std::uint8_t>(v);
}
inline void wr32(Bytes& b, std::size_t off, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[off + i] = static_cast<std::uint8_t>(v >> (24 - 8 * i));
}

}  // namespace detail

/// Why a frame did not yield a packet.
enum class FrameStatus { ok, not_ip, ipv6, malformed };

struct FrameResult {
  FrameStatus status = FrameStatus::malformed;
  std::optional<Packet> packet;
};

/// Parses one Ethernet frame. TCP and UDP get parsed transport headers; any
/// other IPv4 protocol (and non-first fragments) keeps an opaque transport.
inline FrameResult parse_ethernet_frame(Bytes frame, std::int64_t timestamp_us) {
  ByteView b(frame);
  if (b.size() < 14) return {FrameStatus::malformed, std::nullopt};
  std::size_t off = 12;
  std::uint16_t ethertype = detail::rd16(b, off);
  off += 2;
  while (ethertype == 0x8100 || ethertype == 0x88A8) {
    if (b.size() < off + 4) return {FrameStatus::malformed, std::nullopt};
    ethertype = detail::rd16(b, off + 2);
    off += 4;
  }
  if (ethertype == 0x86DD) return {FrameStatus::ipv6, std::nullopt};
  if (ethertype != 0x0800) return {FrameStatus::not_ip, std::nullopt};

  const std::size_t ip_off = off;
  if (b.size() < ip_off + 20) return {FrameStatus::malformed, std::nullopt};
  Ipv4Header ip;
  ip.version = b[ip_off] >> 4;
  ip.header_length = static_cast<std::uint8_t>((b[ip_off] & 0x0F) * 4);
  if (ip.version != 4) return {FrameStatus::malformed, std::nullopt};
  if (ip.header_length < 20 || b.size() < ip_off + ip.header_length) return {FrameStatus::malformed, std::nullopt};
  ip.tos = b[ip_off + 1];
  ip.total_length = detail::rd16(b, ip_off + 2);
  ip.id = detail::rd16(b, ip_off + 4);
  ip.flags_fragment = detail::rd16(b, ip_off + 6);
  ip.ttl = b[ip_off + 8];
  ip.protocol = b[ip_off + 9];
  ip.checksum = detail::rd16(b, ip_off + 10);
  ip.src_addr = detail::rd32(b, ip_off + 12);
  ip.dst_addr = detail::rd32(b, ip_off + 16);
  if (ip.total_length < ip.header_length) return {FrameStatus::malformed, std::nullopt};

  // Ethernet padding may follow the datagram; a short snaplen may cut it.
  const std::size_t ip_end = std::min(b.size(), ip_off + ip.total_length);
  const std::size_t tr_off = ip_off + ip.header_length;
  const bool fragment = (ip.flags_fragment & 0x1FFF) != 0 || (ip.flags_fragment & 0x2000) != 0;

  Packet p;
  p.timestamp_us = timestamp_us;
  p.ip_offset = ip_off;
  p.ip = ip;
  p.transport_offset = tr_off;
  p.transport = OpaqueTransport{};
  p.transport_header_length = 0;

  if (!fragment && ip.protocol == kProtoTcp) {
    if (ip_end < tr_off + 20) return {FrameStatus::malformed, std::nullopt};
    TcpHeader t;
    t.src_port = detail::rd16(b, tr_off);
    t.dst_port = detail::rd16(b, tr_off + 2);
    t.seq = detail::rd32(b, tr_off + 4);
    t.ack = detail::rd32(b, tr_off + 8);
    t.header_length = static_cast<std::uint8_t>((b[tr_off + 12] >> 4) * 4);
    t.flags = b[tr_off + 13];
    t.window = detail::rd16(b, tr_off + 14);
    t.checksum = detail::rd16(b, tr_off + 16);
    t.urgent = detail::rd16(b, tr_off + 18);
    if (t.header_length < 20 || ip_end < tr_off + t.header_length) return {FrameStatus::malformed, std::nullopt};
    p.transport = t;
    p.transport_header_length = t.header_length;
  } else if (!fragment && ip.protocol == kProtoUdp) {
    if (ip_end < tr_off + 8) return {FrameStatus::malformed, std::nullopt};
    UdpHeader u;
    u.src_port = detail::rd16(b, tr_off);
    u.dst_port = detail::rd16(b, tr_off + 2);
    u.length = detail::rd16(b, tr_off + 4);
    u.checksum = detail::rd16(b, tr_off + 6);
    p.transport = u;
    p.transport_header_length = 8;
  }
  p.payload_offset = tr_off + p.transport_header_length;
  p.payload_length = ip_end - p.payload_offset;
  p.link_bytes = std::move(frame);
  return {FrameStatus::ok, std::move(p)};
}

/// Fields for building a frame by hand (tests and the synthetic generator).
struct PacketBlueprint {
  std::int64_t timestamp_us = 0;
  std::uint32_t src_addr = 0;
  std::uint32_t dst_addr = 0;
  std::uint8_t protocol = kProtoUdp;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint8_t ttl = 64;
  std::uint16_t ip_id = 0;
  std::uint8_t tcp_flags = tcp_flags::ack;
  std::uint32_t seq = 0;
  std::uint32_t ack = 0;
  std::uint16_t window = 65535;
  Bytes tcp_options;  // padded to a multiple of 4
  Bytes payload;
};

/// Serializes a blueprint as Ethernet + IPv4 + TCP/UDP (or raw payload for
/// other protocols) with valid IP and transport checksums, then parses it.
inline Packet build_packet(const PacketBlueprint& bp) {
  Bytes opts = bp.tcp_options;
  while (opts.size() % 4) opts.push_back(0);
  std::size_t tr_len = 0;
  if (bp.protocol == kProtoTcp) tr_len = 20 + opts.size();
  if (bp.protocol == kProtoUdp) tr_len = 8;
  const std::size_t ip_total = 20 + tr_len + bp.payload.size();
  if (ip_total > 0xFFFF) throw Error(ErrorCode::InvalidArgument, "datagram exceeds 65535 bytes");

  Bytes f(14 + ip_total, 0);
  // Ethernet: fixed locally administered MACs
  const std::array<std::uint8_t, 12> macs{0x02, 0, 0, 0, 0, 0x02, 0x02, 0, 0, 0, 0, 0x01};
  std::copy(macs.begin(), macs.end(), f.begin());
  detail::wr16(f, 12, 0x0800);
  const std::size_t ip = 14;
  f[ip] = 0x45;
  detail::wr16(f, ip + 2, static_cast<std::uint16_t>(ip_total));
  detail::wr16(f, ip + 4, bp.ip_id);
  detail::wr16(f, ip + 6, 0x4000);  // don't fragment
  f[ip + 8] = bp.ttl;
  f[ip + 9] = bp.protocol;
  detail::wr32(f, ip + 12, bp.src_addr);
  detail::wr32(f, ip + 16, bp.dst_addr);
  detail::wr16(f, ip + 10, internet_checksum(ByteView(f).subspan(ip, 20)));

  const std::size_t tr = ip + 20;
  if (bp.protocol == kProtoTcp) {
    detail::wr16(f, tr, bp.src_port);
    detail::wr16(f, tr + 2, bp.dst_port);
    detail::wr32(f, tr + 4, bp.seq);
    detail::wr32(f, tr + 8, bp.ack);
    f[tr + 12] = static_cast<std::uint8_t>((tr_len / 4) << 4);
    f[tr + 13] = bp.tcp_flags;
    detail::wr16(f, tr + 14, bp.window);
    std::copy(opts.begin(), opts.end(), f.begin() + static_cast<std::ptrdiff_t>(tr + 20));
  } else if (bp.protocol == kProtoUdp) {
    detail::wr16(f, tr, bp.src_port);
    detail::wr16(f, tr + 2, bp.dst_port);
    detail::wr16(f, tr + 4, static_cast<std::uint16_t>(8 + bp.payload.size()));
  }
  std::copy(bp.payload.begin(), bp.payload.end(), f.begin() + static_cast<std::ptrdiff_t>(tr + tr_len));

  if (bp.protocol == kProtoTcp || bp.protocol == kProtoUdp) {
    // pseudo-header checksum
    const std::size_t seg_len = tr_len + bp.payload.size();
    Bytes pseudo(12 + seg_len, 0);
    detail::wr32(pseudo, 0, bp.src_addr);
    detail::wr32(pseudo, 4, bp.dst_addr);
    pseudo[9] = bp.protocol;
    detail::wr16(pseudo, 10, static_cast<std::uint16_t>(seg_len));
    std::copy(f.begin() + static_cast<std::ptrdiff_t>(tr), f.end(), pseudo.begin() + 12);
    std::uint16_t sum = internet_checksum(pseudo);
    if (bp.protocol == kProtoUdp && sum == 0) sum = 0xFFFF;
    detail::wr16(f, tr + (bp.protocol == kProtoTcp ? 16 : 6), sum);
  }

  auto parsed = parse_ethernet_frame(std::move(f), bp.timestamp_us);
  if (!parsed.packet) throw Error(ErrorCode::InvalidArgument, "blueprint produced an unparseable frame");
  return std::move(*parsed.packet);
}

// ---------------------------------------------------------------------------
// Capture files

struct ParseStats {
  std::size_t records = 0;
  std::size_t packets = 0;
  std::size_t not_ip = 0;
  std::size_t ipv6 = 0;
  std::size_t unsupported_transport = 0;
  std::size_t malformed = 0;
  std::size_t skipped_blocks = 0;  // pcapng blocks other than packets
};

struct ParseResult {
  std::vector<Packet> packets;
  ParseStats stats;
};

inline constexpr std::uint32_t kPcapMagicMicro = 0xA1B2C3D4;
inline constexpr std::uint32_t kPcapMagicNano = 0xA1B23C4D;
inline constexpr std::uint32_t kPcapngSectionHeader = 0x0A0D0D0A;
inline constexpr std::uint32_t kLinkTypeEthernet = 1;

namespace detail {

inline std::uint32_t bswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xFF00) | ((v << 8) & 0xFF0000) | (v << 24);
}

class EndianReader {
 public:
  EndianReader(ByteView data, bool swap) : reader_(data, ErrorCode::TruncatedCapture), swap_(swap) {}
  ByteReader& raw() { return reader_; }
  std::uint16_t u16() { return swap_ ? reader_.be<std::uint16_t>() : reader_.u16le(); }
  std::uint32_t u32() { return swap_ ? reader_.be<std::uint32_t>() : reader_.u32le(); }

 private:
  ByteReader reader_;
  bool swap_;
};

inline void accept_frame(ParseResult& out, ByteView data, std::int64_t ts_us) {
  ++out.stats.records;
  auto fr = parse_ethernet_frame(Bytes(data.begin(), data.end()), ts_us);
  switch (fr.status) {
    case FrameStatus::not_ip: ++out.stats.not_ip; return;
    case FrameStatus::ipv6: ++out.stats.ipv6; return;
    case FrameStatus::malformed: ++out.stats.malformed; return;
    case FrameStatus::ok: break;
  }
  if (!fr.packet->has_ports()) {
    ++out.stats.unsupported_transport;
    return;
  }
  out.packets.push_back(std::move(*fr.packet));
  ++out.stats.packets;
}

inline ParseResult parse_classic(ByteView file) {
  ByteReader head(file);
  const std::uint32_t magic_le = head.u32le();
  bool swap = false;
  bool nano = false;
  if (magic_le == kPcapMagicMicro || magic_le == kPcapMagicNano) {
    nano = magic_le == kPcapMagicNano;
  } else if (bswap32(magic_le) == kPcapMagicMicro || bswap32(magic_le) == kPcapMagicNano) {
    swap = true;
    nano = bswap32(magic_le) == kPcapMagicNano;
  }
  EndianReader r(file, swap);
  r.raw().skip(4);
  r.u16();  // version major
  r.u16();  // version minor
  r.u32();  // thiszone
  r.u32();  // sigfigs
  r.u32();  // snaplen
  const std::uint32_t linktype = r.u32() & 0x0FFFFFFF;
  if (linktype != kLinkTypeEthernet) {
    throw Error(ErrorCode::UnsupportedLinkType, "link type " + std::to_string(linktype));
  }
  ParseResult out;
  while (!r.raw().empty()) {
    const std::uint32_t sec = r.u32();
    const std::uint32_t frac = r.u32();
    const std::uint32_t incl = r.u32();
    r.u32();  // original length
    if (incl > r.raw().remaining()) {
      throw Error(ErrorCode::TruncatedCapture, "record claims " + std::to_string(incl) + " bytes, " +
                                                   std::to_string(r.raw().remaining()) + " remain");
    }
    const std::int64_t ts = static_cast<std::int64_t>(sec) * 1'000'000 + (nano ? frac / 1000 : frac);
    detail::accept_frame(out, r.raw().take(incl), ts);
  }
  return out;
}

inline std::int64_t scale_timestamp(std::uint64_t units, std::uint8_t tsresol) {
  if (tsresol & 0x80) {
    const unsigned shift = tsresol & 0x7F;
    if (shift >= 64) return 0;
    return static_cast<std::int64_t>((static_cast<unsigned __int128>(units) * 1'000'000u) >> shift);
  }
  std::int64_t v = static_cast<std::int64_t>(units);
  int exp = tsresol;
  for (; exp > 6; --exp) v /= 10;
  for (; exp < 6; ++exp) v *= 10;
  return v;
}

inline ParseResult parse_pcapng(ByteView file) {
  ParseResult out;
  struct Interface {
    std::uint32_t linktype;
    std::uint32_t snaplen;
    std::uint8_t tsresol;
  };
  std::vector<Interface> interfaces;
  bool swap = false;
  std::size_t pos = 0;
  while (pos < file.size()) {
    ByteReader peek(file.subspan(pos));
    const std::uint32_t type_le = peek.u32le();
    if (type_le == kPcapngSectionHeader) {
      if (file.size() - pos < 12) throw Error(ErrorCode::TruncatedCapture, "short section header");
      ByteReader sh(file.subspan(pos + 8));
      const std::uint32_t bom = sh.u32le();
      if (bom == 0x1A2B3C4D) {
        swap = false;
      } else if (bom == 0x4D3C2B1A) {
        swap = true;
      } else {
        throw Error(ErrorCode::BadMagic, "pcapng byte-order magic");
      }
      interfaces.clear();
    }
    EndianReader r(file.subspan(pos), swap);
    const std::uint32_t type = r.u32();
    const std::uint32_t total = r.u32();
    if (total < 12 || total % 4 != 0 || total > file.size() - pos) {
      throw Error(ErrorCode::TruncatedCapture, "pcapng block length " + std::to_string(total));
    }
    const ByteView body = file.subspan(pos + 8, total - 12);
    EndianReader br(body, swap);
    if (type == 1) {  // interface description
      Interface itf{br.u16(), 0, 6};
      br.u16();
      itf.snaplen = br.u32();
      while (br.raw().remaining() >= 4) {
        const std::uint16_t code = br.u16();
        const std::uint16_t len = br.u16();
        if (code == 0) break;
        auto val = br.raw().take(len);
        br.raw().skip((4 - len % 4) % 4);
        if (code == 9 && len >= 1) itf.tsresol = val[0];
      }
      interfaces.push_back(itf);
    } else if (type == 6) {  // enhanced packet
      const std::uint32_t iface = br.u32();
      const std::uint64_t hi = br.u32();
      const std::uint64_t lo = br.u32();
      const std::uint32_t caplen = br.u32();
      br.u32();  // original length
      if (iface >= interfaces.size()) throw Error(ErrorCode::TruncatedCapture, "packet references unknown interface");
      if (interfaces[iface].linktype != kLinkTypeEthernet) {
        throw Error(ErrorCode::UnsupportedLinkType, "link type " + std::to_string(interfaces[iface].linktype));
      }
      auto data = br.raw().take(caplen);
      detail::accept_frame(out, data, scale_timestamp((hi << 32) | lo, interfaces[iface].tsresol));
    } else if (type == 3) {  // simple packet
      const std::uint32_t orig = br.u32();
      if (interfaces.empty()) throw Error(ErrorCode::TruncatedCapture, "simple packet before interface block");
      if (interfaces[0].linktype != kLinkTypeEthernet) {
        throw Error(ErrorCode::UnsupportedLinkType, "link type " + std::to_string(interfaces[0].linktype));
      }
      std::size_t caplen = std::min<std::size_t>(orig, br.raw().remaining());
      if (interfaces[0].snaplen) caplen = std::min<std::size_t>(caplen, interfaces[0].snaplen);
      detail::accept_frame(out, br.raw().take(caplen), 0);
    } else if (type != kPcapngSectionHeader) {
      ++out.stats.skipped_blocks;
    }
    pos += total;
  }
  return out;
}

}  // namespace detail

/// Parses a classic pcap (microsecond or nanosecond, either byte order) or a
/// pcapng file. One packet per well-formed IPv4 TCP/UDP record, in file
/// order; everything else is counted in the stats.
inline ParseResult parse_pcap(ByteView file) {
  if (file.size() < 4) throw Error(ErrorCode::BadMagic, "file shorter than a magic number");
  ByteReader head(file);
  const std::uint32_t magic = head.u32le();
  if (magic == kPcapngSectionHeader) return detail::parse_pcapng(file);
  for (std::uint32_t m : {kPcapMagicMicro, kPcapMagicNano}) {
    if (magic == m || detail::bswap32(magic) == m) return detail::parse_classic(file);
  }
  throw Error(ErrorCode::BadMagic, "unrecognized capture magic");
}

/// Little-endian classic pcap, Ethernet link type.
inline Bytes write_pcap(std::span<const Packet> packets, bool nanosecond = false) {
  ByteWriter w;
  w.u32le(nanosecond ? kPcapMagicNano : kPcapMagicMicro);
  w.u16le(2);
  w.u16le(4);
  w.u32le(0);
  w.u32le(0);
  w.u32le(65535);
  w.u32le(kLinkTypeEthernet);
  for (const auto& p : packets) {
    const auto sec = p.timestamp_us / 1'000'000;
    const auto usec = p.timestamp_us % 1'000'000;
    w.u32le(static_cast<std::uint32_t>(sec));
    w.u32le(static_cast<std::uint32_t>(nanosecond ? usec * 1000 : usec));
    w.u32le(static_cast<std::uint32_t>(p.link_bytes.size()));
    w.u32le(static_cast<std::uint32_t>(p.link_bytes.size()));
    w.bytes(p.link_bytes);
  }
  return w.take();
}

}  // namespace trafficlm
