#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "trafficlm/error.hpp"
#include "trafficlm/flow.hpp"
#include "trafficlm/rng.hpp"

namespace trafficlm {

/// Split of each packet band into header and payload cells. The band holds
/// 320 cells (8 rows of 40), so header_bytes + payload_bytes must be 320.
struct MfrLayout {
  std::size_t header_bytes = 80;
  std::size_t payload_bytes = 240;
};

/// 40x40 grayscale flow image: 5 packet bands of 8 rows. Within a band the
/// first header_bytes cells hold IP+transport header bytes and the rest the
/// payload, row-major, zero-filled.
struct MfrMatrix {
  static constexpr std::size_t rows = 40;
  static constexpr std::size_t cols = 40;
  static constexpr std::size_t packets = 5;
  static constexpr std::size_t band_cells = rows * cols / packets;

  std::array<std::uint8_t, rows * cols> cells{};

  std::uint8_t at(std::size_t r, std::size_t c) const { return cells[r * cols + c]; }
  std::uint8_t& at(std::size_t r, std::size_t c) { return cells[r * cols + c]; }
  bool operator==(const MfrMatrix&) const = default;
};

inline MfrMatrix build_mfr(const Flow& flow, const MfrLayout& layout = {}) {
  if (flow.packets.empty()) throw Error(ErrorCode::EmptyFlow, "cannot build an image of an empty flow");
  if (layout.header_bytes + layout.payload_bytes != MfrMatrix::band_cells) {
    throw Error(ErrorCode::InvalidArgument, "header_bytes + payload_bytes must equal 320");
  }
  MfrMatrix m;
  const std::size_t n = std::min(flow.packets.size(), MfrMatrix::packets);
  for (std::size_t k = 0; k < n; ++k) {
    const Packet& p = flow.packets[k];
    const std::size_t band = k * MfrMatrix::band_cells;
    const auto header = p.header_bytes();
    const auto payload = p.payload();
    std::copy_n(header.begin(), std::min(header.size(), layout.header_bytes), m.cells.begin() + static_cast<std::ptrdiff_t>(band));
    std::copy_n(payload.begin(), std::min(payload.size(), layout.payload_bytes),
                m.cells.begin() + static_cast<std::ptrdiff_t>(band + layout.header_bytes));
  }
  return m;
}

/// Patches of a matrix (or byte sequence) in row-major order. For 2D
/// patches patch_dim = patch_size^2; for 1D patches patch_dim = patch_size.
struct PatchSet {
  std::size_t patch_size = 0;
  std::size_t patch_dim = 0;
  std::vector<std::uint8_t> values;  // count() * patch_dim
  std::vector<std::size_t> mask;     // sorted, distinct

  std::size_t count() const { return patch_dim ? values.size() / patch_dim : 0; }
  std::span<const std::uint8_t> patch(std::size_t i) const {
    return std::span(values).subspan(i * patch_dim, patch_dim);
  }
  bool is_masked(std::size_t i) const { return std::binary_search(mask.begin(), mask.end(), i); }
};

inline PatchSet patchify(const MfrMatrix& m, std::size_t patch_size) {
  if (patch_size == 0 || MfrMatrix::rows % patch_size != 0) {
    throw Error(ErrorCode::IndivisiblePatch, "patch size " + std::to_string(patch_size) + " does not divide 40");
  }
  PatchSet p;
  p.patch_size = patch_size;
  p.patch_dim = patch_size * patch_size;
  const std::size_t per_side = MfrMatrix::rows / patch_size;
  p.values.reserve(MfrMatrix::rows * MfrMatrix::cols);
  for (std::size_t pr = 0; pr < per_side; ++pr) {
    for (std::size_t pc = 0; pc < per_side; ++pc) {
      for (std::size_t r = 0; r < patch_size; ++r) {
        for (std::size_t c = 0; c < patch_size; ++c) p.values.push_back(m.at(pr * patch_size + r, pc * patch_size + c));
      }
    }
  }
  return p;
}

/// Inverse of patchify for square patch sets.
inline MfrMatrix unpatchify(const PatchSet& p) {
  if (p.patch_size == 0 || p.patch_dim != p.patch_size * p.patch_size || p.values.size() != MfrMatrix::rows * MfrMatrix::cols) {
    throw Error(ErrorCode::ShapeMismatch, "not a 2D patch set of a 40x40 matrix");
  }
  MfrMatrix m;
  const std::size_t per_side = MfrMatrix::rows / p.patch_size;
  for (std::size_t i = 0; i < p.count(); ++i) {
    const std::size_t pr = i / per_side, pc = i % per_side;
    for (std::size_t k = 0; k < p.patch_dim; ++k) {
      m.at(pr * p.patch_size + k / p.patch_size, pc * p.patch_size + k % p.patch_size) = p.values[i * p.patch_dim + k];
    }
  }
  return m;
}

/// floor(ratio * n), robust to the representation error of ratio.
inline std::size_t masked_count(double ratio, std::size_t n) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
}

/// Masks exactly floor(ratio * count) distinct patches, drawn uniformly
/// without replacement.
inline PatchSet mask_patches(PatchSet p, double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw Error(ErrorCode::InvalidArgument, "mask ratio outside [0,1]");
  Rng rng(seed);
  p.mask = rng.sample(p.count(), masked_count(ratio, p.count()));
  std::sort(p.mask.begin(), p.mask.end());
  return p;
}

/// Burst bytes (headers and payloads) cut or zero-padded to max_bytes and
/// sliced into consecutive patch_len-byte patches.
inline PatchSet burst_to_patches_1d(const Burst& burst, std::size_t patch_len, std::size_t max_bytes) {
  if (patch_len == 0) throw Error(ErrorCode::BadPatchLen, "patch length must be positive");
  if (max_bytes == 0 || max_bytes % patch_len != 0) {
    throw Error(ErrorCode::BadPatchLen, "max_bytes must be a positive multiple of the patch length");
  }
  PatchSet p;
  p.patch_size = patch_len;
  p.patch_dim = patch_len;
  p.values.reserve(max_bytes);
  for (const auto& pkt : burst.packets) {
    const auto bytes = ByteView(pkt.link_bytes).subspan(pkt.ip_offset, pkt.payload_offset + pkt.payload_length - pkt.ip_offset);
    for (auto b : bytes) {
      if (p.values.size() == max_bytes) break;
      p.values.push_back(b);
    }
  }
  p.values.resize(max_bytes, 0);
  return p;
}

/// Binary (P5) PGM image of the matrix.
inline std::string to_pgm(const MfrMatrix& m) {
  std::string out = "P5\n40 40\n255\n";
  out.append(m.cells.begin(), m.cells.end());
  return out;
}

}  // namespace trafficlm
