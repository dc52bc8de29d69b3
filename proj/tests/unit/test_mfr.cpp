#include <gtest/gtest.h>

#include <set>

#include "trafficlm/mfr.hpp"
#include "trafficlm/synth.hpp"
#include "trafficlm/testing/fuzz.hpp"
#include "util.hpp"

using namespace trafficlm;

namespace {

Packet udp(Bytes payload) {
  PacketBlueprint bp;
  bp.src_addr = ipv4(10, 0, 0, 1);
  bp.dst_addr = ipv4(10, 0, 0, 2);
  bp.src_port = 1;
  bp.dst_port = 2;
  bp.payload = std::move(payload);
  return build_packet(bp);
}

// Ethernet + IPv4 with 40 option bytes (IHL 15) + TCP with 40 option bytes:
// 120 header bytes in front of the payload.
Packet fat_header_packet(std::size_t payload) {
  Bytes f(14, 0);
  f[12] = 0x08;
  const std::size_t total = 60 + 60 + payload;
  Bytes ip(60, 0x11);
  ip[0] = 0x4F;
  ip[2] = static_cast<std::uint8_t>(total >> 8);
  ip[3] = static_cast<std::uint8_t>(total);
  ip[6] = ip[7] = 0;
  ip[8] = 64;
  ip[9] = kProtoTcp;
  Bytes tcp(60, 0x22);
  tcp[12] = 0xF0;  // data offset 15 words
  f.insert(f.end(), ip.begin(), ip.end());
  f.insert(f.end(), tcp.begin(), tcp.end());
  for (std::size_t i = 0; i < payload; ++i) f.push_back(0x33);
  auto r = parse_ethernet_frame(std::move(f), 0);
  return *r.packet;
}

MfrMatrix random_matrix(Rng& rng) {
  MfrMatrix m;
  for (auto& c : m.cells) c = static_cast<std::uint8_t>(rng.below(256));
  return m;
}

}  // namespace

TEST(BuildMfr, MissingPacketsAreZeroBands) {
  Flow f;
  f.packets = {udp(Bytes(10, 0xAB)), udp(Bytes(300, 0xCD))};
  const auto m = build_mfr(f);
  EXPECT_EQ(m.cells.size(), 1600u);
  for (std::size_t r = 16; r < 40; ++r) {
    for (std::size_t c = 0; c < 40; ++c) EXPECT_EQ(m.at(r, c), 0) << r << "," << c;
  }
  // band 0: 28 header bytes, zero fill to cell 80, payload from 80
  const auto h = f.packets[0].header_bytes();
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_EQ(m.cells[i], h[i]);
  EXPECT_EQ(m.cells[h.size()], 0);
  EXPECT_EQ(m.cells[80], 0xAB);
  EXPECT_EQ(m.cells[89], 0xAB);
  EXPECT_EQ(m.cells[90], 0);
  // band 1: payload cut at 240 bytes
  EXPECT_EQ(m.cells[320 + 80 + 239], 0xCD);
  EXPECT_ERROR(EmptyFlow, build_mfr(Flow{}));
}

TEST(BuildMfr, LongHeaderCutAtEightyBytes) {
  Flow f;
  f.packets = {fat_header_packet(5)};
  ASSERT_EQ(f.packets[0].header_bytes().size(), 120u);
  const auto m = build_mfr(f);
  for (std::size_t i = 0; i < 80; ++i) EXPECT_EQ(m.cells[i], f.packets[0].header_bytes()[i]);
  EXPECT_EQ(m.cells[79], 0x22);
  for (std::size_t i = 80; i < 85; ++i) EXPECT_EQ(m.cells[i], 0x33);
  EXPECT_EQ(m.cells[85], 0);
}

TEST(BuildMfr, DependsOnlyOnFirstFivePackets) {
  auto flows = synth_flows(preset_spec("mixed", 20), 2);
  for (const auto& f : flows) {
    Flow g = f;
    g.packets.resize(std::min<std::size_t>(5, g.packets.size()));
    g.packets.push_back(udp(Bytes(50, 1)));
    if (f.packets.size() >= 5) {
      EXPECT_EQ(build_mfr(f), build_mfr(g));
    }
    EXPECT_EQ(build_mfr(f), build_mfr(f));
  }
}

TEST(BuildMfr, LayoutMustFillBand) { EXPECT_ERROR(InvalidArgument, build_mfr(Flow{{}, {udp({})}, {}, {}}, MfrLayout{100, 100})); }

TEST(Patchify, CountsAndAnchors) {
  Rng rng(1);
  const auto m = random_matrix(rng);
  const auto p = patchify(m, 4);
  EXPECT_EQ(p.count(), 100u);
  EXPECT_EQ(p.patch_dim, 16u);
  // patch 11 is grid cell (1, 1): rows 4-7, cols 4-7
  EXPECT_EQ(p.patch(11)[0], m.at(4, 4));
  EXPECT_EQ(p.patch(11)[15], m.at(7, 7));
  EXPECT_EQ(patchify(m, 8).count(), 25u);
  EXPECT_EQ(patchify(m, 40).count(), 1u);
  EXPECT_ERROR(IndivisiblePatch, patchify(m, 7));
  EXPECT_ERROR(IndivisiblePatch, patchify(m, 0));
}

TEST(Patchify, InverseIsIdentity) {
  Rng rng(2);
  for (std::size_t s : {1, 2, 4, 5, 8, 10, 20, 40}) {
    const auto m = random_matrix(rng);
    EXPECT_EQ(unpatchify(patchify(m, s)), m);
  }
}

TEST(MaskPatches, ExactCountsDistinctAndDeterministic) {
  Rng rng(3);
  const auto p = patchify(random_matrix(rng), 4);
  EXPECT_EQ(mask_patches(p, 0.9, 7).mask.size(), 90u);
  EXPECT_TRUE(mask_patches(p, 0.0, 7).mask.empty());
  EXPECT_EQ(mask_patches(p, 0.9, 7).mask, mask_patches(p, 0.9, 7).mask);
  EXPECT_NE(mask_patches(p, 0.5, 7).mask, mask_patches(p, 0.5, 8).mask);
  EXPECT_ERROR(InvalidArgument, mask_patches(p, 1.5, 1));
  for (int t = 0; t < 200; ++t) {
    PatchSet q;
    q.patch_size = 1;
    q.patch_dim = 1;
    q.values.assign(1 + rng.below(300), 0);
    const double ratio = static_cast<double>(rng.below(101)) / 100.0;
    const auto m = mask_patches(q, ratio, rng.next());
    EXPECT_EQ(m.mask.size(), static_cast<std::size_t>(std::floor(ratio * static_cast<double>(q.count()) + 1e-9)));
    EXPECT_EQ(std::set<std::size_t>(m.mask.begin(), m.mask.end()).size(), m.mask.size());
    for (auto i : m.mask) EXPECT_LT(i, q.count());
  }
}

TEST(MaskedCount, FloorOfProduct) {
  EXPECT_EQ(masked_count(0.15, 100), 15u);
  EXPECT_EQ(masked_count(0.9, 100), 90u);
  EXPECT_EQ(masked_count(0.15, 37), 5u);
  EXPECT_EQ(masked_count(0.5, 7), 3u);
  EXPECT_EQ(masked_count(0.0, 9), 0u);
}

TEST(BurstPatches, Examples) {
  Flow f;
  f.packets = {udp(Bytes(36, 5))};  // 64 IP bytes
  const auto b = segment_bursts(f);
  const auto p = burst_to_patches_1d(b[0], 16, 64);
  EXPECT_EQ(p.count(), 4u);
  EXPECT_EQ(p.patch_dim, 16u);
  EXPECT_EQ(p.values.back(), 5);

  Flow g;
  g.packets = {udp(Bytes(32, 6))};  // 60 IP bytes
  const auto q = burst_to_patches_1d(segment_bursts(g)[0], 16, 64);
  EXPECT_EQ(q.count(), 4u);
  for (std::size_t i = 60; i < 64; ++i) EXPECT_EQ(q.values[i], 0);
  EXPECT_EQ(q.values[59], 6);

  EXPECT_ERROR(BadPatchLen, burst_to_patches_1d(b[0], 0, 64));
  EXPECT_ERROR(BadPatchLen, burst_to_patches_1d(b[0], 16, 60));
}

TEST(Pgm, HeaderAndSize) {
  Rng rng(4);
  const auto pgm = to_pgm(random_matrix(rng));
  EXPECT_EQ(pgm.rfind("P5\n40 40\n255\n", 0), 0u);
  EXPECT_EQ(pgm.size(), 13u + 1600u);
}
