#pragma once

// Random inputs for property tests.

#include <cstdint>
#include <string>
#include <vector>

#include "trafficlm/flow.hpp"
#include "trafficlm/pcap.hpp"
#include "trafficlm/rng.hpp"
#include "trafficlm/testing/oracles.hpp"

namespace trafficlm::testing {

inline Bytes random_bytes(Rng& rng, std::size_t n) {
  Bytes b(n);
  for (auto& x : b) x = static_cast<std::uint8_t>(rng.below(256));
  return b;
}

/// One flow of 1..max_packets packets between two random endpoints, in both
/// directions, with random TCP options and payloads of 0..max_payload bytes.
inline Flow random_flow(Rng& rng, std::size_t max_packets = 12, std::size_t max_payload = 1400) {
  const std::uint8_t proto = rng.below(2) ? kProtoTcp : kProtoUdp;
  const auto client = static_cast<std::uint32_t>(rng.next());
  auto server = static_cast<std::uint32_t>(rng.next());
  if (server == client) server ^= 1;
  const auto cport = static_cast<std::uint16_t>(1024 + rng.below(60000));
  const auto sport = static_cast<std::uint16_t>(1 + rng.below(1023));
  const std::size_t n = 1 + rng.below(max_packets);
  std::vector<Packet> packets;
  std::int64_t t = 1'600'000'000'000'000 + static_cast<std::int64_t>(rng.below(1'000'000'000));
  for (std::size_t i = 0; i < n; ++i) {
    PacketBlueprint bp;
    const bool reverse = i > 0 && rng.uniform() < 0.5;
    bp.timestamp_us = t;
    bp.src_addr = reverse ? server : client;
    bp.dst_addr = reverse ? client : server;
    bp.src_port = reverse ? sport : cport;
    bp.dst_port = reverse ? cport : sport;
    bp.protocol = proto;
    bp.ttl = static_cast<std::uint8_t>(1 + rng.below(255));
    bp.ip_id = static_cast<std::uint16_t>(rng.below(65536));
    bp.tcp_flags = static_cast<std::uint8_t>(rng.below(64));
    bp.seq = static_cast<std::uint32_t>(rng.next());
    bp.ack = static_cast<std::uint32_t>(rng.next());
    if (proto == kProtoTcp) bp.tcp_options = random_bytes(rng, rng.below(11));
    bp.payload = random_bytes(rng, rng.below(max_payload + 1));
    packets.push_back(build_packet(bp));
    t += static_cast<std::int64_t>(rng.below(2'000'000));
  }
  auto flows = assemble_flows(std::move(packets)).flows;
  return flows.front();
}

/// Short hex-unit sequences over a tiny byte alphabet so that pair counts
/// tie often. Units are unigrams or bi-grams; total units <= max_units.
inline std::vector<std::vector<std::string>> random_bpe_corpus(Rng& rng, std::size_t max_units = 1000) {
  const std::size_t alphabet = 2 + rng.below(5);
  std::vector<unsigned> bytes;
  for (std::size_t i = 0; i < alphabet; ++i) bytes.push_back(static_cast<unsigned>(rng.below(256)));
  const std::size_t total = 20 + rng.below(max_units - 19);
  std::vector<std::vector<std::string>> corpus;
  std::size_t used = 0;
  while (used < total) {
    const std::size_t len = std::min<std::size_t>(1 + rng.below(40), total - used);
    std::vector<std::string> seq;
    for (std::size_t i = 0; i < len; ++i) {
      std::string u = oracle::hex_byte(bytes[rng.below(alphabet)]);
      if (rng.uniform() < 0.5) u += oracle::hex_byte(bytes[rng.below(alphabet)]);
      seq.push_back(std::move(u));
    }
    used += len;
    corpus.push_back(std::move(seq));
  }
  return corpus;
}

}  // namespace trafficlm::testing
