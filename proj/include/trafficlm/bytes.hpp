#pragma once

#include <openssl/evp.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trafficlm/error.hpp"

namespace trafficlm {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// Bounds-checked cursor over a byte buffer. Every read past the end raises
/// the error code given at construction, never touching memory outside the
/// view.
class ByteReader {
 public:
  ByteReader(ByteView data, ErrorCode on_short = ErrorCode::TruncatedCapture)
      : data_(data), on_short_(on_short) {}

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  bool empty() const { return pos_ == data_.size(); }

  void require(std::size_t n) const {
    if (n > remaining()) {
      throw Error(on_short_, "need " + std::to_string(n) + " bytes at offset " +
                                 std::to_string(pos_) + ", " + std::to_string(remaining()) +
                                 " remain");
    }
  }

  ByteView take(std::size_t n) {
    require(n);
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  void skip(std::size_t n) { take(n); }

  std::uint8_t u8() { return take(1)[0]; }

  template <typename U>
  U le() {
    auto s = take(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(s[i]) << (8 * i));
    return v;
  }

  template <typename U>
  U be() {
    auto s = take(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v = static_cast<U>((v << 8) | s[i]);
    return v;
  }

  std::uint16_t u16le() { return le<std::uint16_t>(); }
  std::uint32_t u32le() { return le<std::uint32_t>(); }
  std::uint64_t u64le() { return le<std::uint64_t>(); }
  std::int32_t i32le() { return static_cast<std::int32_t>(u32le()); }
  std::int64_t i64le() { return static_cast<std::int64_t>(u64le()); }
  double f64le() { return std::bit_cast<double>(u64le()); }
  float f32le() { return std::bit_cast<float>(u32le()); }

  std::string str(std::size_t n) {
    auto s = take(n);
    return {s.begin(), s.end()};
  }

 private:
  ByteView data_;
  std::size_t pos_ = 0;
  ErrorCode on_short_;
};

class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }

  template <typename U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  template <typename U>
  void be(U v) {
    for (std::size_t i = sizeof(U); i-- > 0;) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  void u16le(std::uint16_t v) { le(v); }
  void u32le(std::uint32_t v) { le(v); }
  void u64le(std::uint64_t v) { le(v); }
  void i32le(std::int32_t v) { le(static_cast<std::uint32_t>(v)); }
  void i64le(std::int64_t v) { le(static_cast<std::uint64_t>(v)); }
  void f64le(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void f32le(float v) { le(std::bit_cast<std::uint32_t>(v)); }

  void bytes(ByteView b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void str(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }

  std::size_t size() const { return out_.size(); }
  Bytes& buffer() { return out_; }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

inline std::string to_hex(ByteView data) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (auto b : data) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0xF]);
  }
  return out;
}

/// Hex SHA-256 digest, used for checkpoint hashes and run manifests.
inline std::string sha256_hex(ByteView data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
  return to_hex(ByteView(digest, len));
}

inline std::string sha256_hex(std::string_view text) {
  return sha256_hex(ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, ByteView data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

inline void write_file(const std::string& path, std::string_view text) {
  write_file(path, ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace trafficlm
