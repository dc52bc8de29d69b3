#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "trafficlm/bytes.hpp"
#include "trafficlm/error.hpp"
#include "trafficlm/flow.hpp"
#include "trafficlm/pcap.hpp"

namespace trafficlm {

using TokenId = std::uint32_t;

/// Reserved id layout. Ids below kFirstDataId are never produced by BPE.
namespace special {
inline constexpr TokenId pad = 0;
inline constexpr TokenId cls = 1;
inline constexpr TokenId sep = 2;
inline constexpr TokenId mask = 3;
inline constexpr TokenId pkt = 4;
inline constexpr TokenId hdr = 5;
inline constexpr TokenId bos = 6;
inline constexpr TokenId eos = 7;
inline constexpr TokenId label_base = 8;  // [LABEL_0..7], class tags for prompts
inline constexpr TokenId label_count = 8;
inline constexpr TokenId time_base = 16;  // [TIME_0..31]
inline constexpr TokenId time_count = 32;

constexpr TokenId label(unsigned k) { return label_base + k; }
constexpr TokenId time(unsigned e) { return time_base + e; }
}  // namespace special

inline constexpr TokenId kFirstDataId = 48;
inline constexpr TokenId kUnigramCount = 256;
inline constexpr TokenId kMinVocabSize = kFirstDataId + kUnigramCount;

/// Non-overlapping byte bi-grams as 4 lowercase hex chars; a trailing odd
/// byte becomes a 2-char unigram.
inline std::vector<std::string> bytes_to_hex_units(ByteView data) {
  std::vector<std::string> out;
  out.reserve((data.size() + 1) / 2);
  for (std::size_t i = 0; i < data.size(); i += 2) out.push_back(to_hex(data.subspan(i, std::min<std::size_t>(2, data.size() - i))));
  return out;
}

inline TokenId time_interval_token(std::int64_t delta_us) {
  if (delta_us < 0) throw Error(ErrorCode::InvalidArgument, "negative time interval");
  const auto e = std::bit_width(static_cast<std::uint64_t>(delta_us) + 1) - 1;
  return special::time(static_cast<unsigned>(std::min<int>(31, static_cast<int>(e))));
}

namespace detail {

inline bool is_hex_unit(std::string_view s) {
  if (s.empty() || s.size() % 2) return false;
  return std::all_of(s.begin(), s.end(), [](char c) { return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'); });
}

inline std::uint8_t hex_nibble(char c) { return static_cast<std::uint8_t>(c <= '9' ? c - '0' : c - 'a' + 10); }

inline std::uint64_t pair_key(TokenId a, TokenId b) { return (std::uint64_t{a} << 32) | b; }

inline std::string reserved_name(TokenId id) {
  static constexpr const char* names[] = {"[PAD]", "[CLS]", "[SEP]", "[MASK]", "[PKT]", "[HDR]", "[BOS]", "[EOS]"};
  if (id < 8) return names[id];
  if (id < special::time_base) return "[LABEL_" + std::to_string(id - special::label_base) + "]";
  return "[TIME_" + std::to_string(id - special::time_base) + "]";
}

/// Compares a+b against c+d lexicographically without building strings.
inline int compare_concat(std::string_view a, std::string_view b, std::string_view c, std::string_view d) {
  const std::size_t n1 = a.size() + b.size();
  const std::size_t n2 = c.size() + d.size();
  for (std::size_t i = 0; i < std::min(n1, n2); ++i) {
    const char x = i < a.size() ? a[i] : b[i - a.size()];
    const char y = i < c.size() ? c[i] : d[i - c.size()];
    if (x != y) return x < y ? -1 : 1;
  }
  return n1 == n2 ? 0 : (n1 < n2 ? -1 : 1);
}

}  // namespace detail

/// Hex-unit vocabulary with an ordered BPE merge list.
///
/// Ids 0-47 are reserved tokens, 48-303 the 256 byte unigrams, then the
/// base bi-grams in lexicographic order, then one id per merge whose result
/// string is new.
class Vocabulary {
 public:
  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

  /// Base vocabulary: reserved tokens, all unigrams and the given bi-grams.
  explicit Vocabulary(std::vector<std::string> bigrams) {
    for (TokenId id = 0; id < kFirstDataId; ++id) push(detail::reserved_name(id));
    for (unsigned b = 0; b < kUnigramCount; ++b) {
      const std::uint8_t byte = static_cast<std::uint8_t>(b);
      push(to_hex(ByteView(&byte, 1)));
    }
    std::sort(bigrams.begin(), bigrams.end());
    bigrams.erase(std::unique(bigrams.begin(), bigrams.end()), bigrams.end());
    for (auto& s : bigrams) {
      if (s.size() != 4 || !detail::is_hex_unit(s)) throw Error(ErrorCode::InvalidArgument, "bad bi-gram unit '" + s + "'");
      push(std::move(s));
    }
    base_size_ = units_.size();
  }

  std::size_t size() const { return units_.size(); }
  std::size_t base_size() const { return base_size_; }
  const std::string& unit(TokenId id) const { return units_.at(id); }
  const std::vector<std::string>& units() const { return units_; }
  const std::vector<std::pair<TokenId, TokenId>>& merges() const { return merges_; }

  static bool is_data(TokenId id) { return id >= kFirstDataId; }
  bool contains(TokenId id) const { return id < units_.size(); }

  std::optional<TokenId> find(std::string_view unit) const {
    auto it = index_.find(std::string(unit));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Number of bytes a data unit decodes to.
  std::size_t byte_length(TokenId id) const { return units_.at(id).size() / 2; }

  /// Records a merge; returns the id of the merged unit (new or existing).
  TokenId add_merge(TokenId a, TokenId b) {
    if (!is_data(a) || !is_data(b) || a >= size() || b >= size()) {
      throw Error(ErrorCode::InvalidArgument, "merge references undefined units");
    }
    std::string joined = units_[a] + units_[b];
    TokenId result;
    if (auto existing = find(joined)) {
      result = *existing;
    } else {
      result = static_cast<TokenId>(units_.size());
      push(std::move(joined));
    }
    ranks_.try_emplace(detail::pair_key(a, b), static_cast<std::uint32_t>(merges_.size()), result);
    merges_.emplace_back(a, b);
    return result;
  }

  /// Maps hex units to base ids; bi-grams outside the base split into their
  /// two unigrams.
  void append_base_ids(std::span<const std::string> units, std::vector<TokenId>& out) const {
    for (const auto& u : units) {
      if (u.size() == 2 || u.size() == 4) {
        if (auto id = find(u); id && *id < base_size_) {
          out.push_back(*id);
          continue;
        }
      }
      if (!detail::is_hex_unit(u)) throw Error(ErrorCode::InvalidArgument, "not a hex unit: '" + u + "'");
      for (std::size_t i = 0; i < u.size(); i += 2) out.push_back(*find(u.substr(i, 2)));
    }
  }

  /// Applies merges in rank order, each over all left-to-right
  /// non-overlapping occurrences.
  std::vector<TokenId> apply_merges(std::vector<TokenId> ids) const {
    if (ranks_.empty()) return ids;
    while (ids.size() > 1) {
      std::uint32_t best = std::numeric_limits<std::uint32_t>::max();
      TokenId a = 0, b = 0, result = 0;
      for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
        auto it = ranks_.find(detail::pair_key(ids[i], ids[i + 1]));
        if (it != ranks_.end() && it->second.first < best) {
          best = it->second.first;
          a = ids[i];
          b = ids[i + 1];
          result = it->second.second;
        }
      }
      if (best == std::numeric_limits<std::uint32_t>::max()) break;
      std::size_t w = 0;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i + 1 < ids.size() && ids[i] == a && ids[i + 1] == b) {
          ids[w++] = result;
          ++i;
        } else {
          ids[w++] = ids[i];
        }
      }
      ids.resize(w);
    }
    return ids;
  }

  std::vector<TokenId> encode(ByteView data) const {
    std::vector<TokenId> ids;
    const auto units = bytes_to_hex_units(data);
    append_base_ids(units, ids);
    return apply_merges(std::move(ids));
  }

  Bytes decode(std::span<const TokenId> ids) const {
    Bytes out;
    for (TokenId id : ids) {
      if (id >= size()) throw Error(ErrorCode::UnknownToken, "id " + std::to_string(id));
      if (!is_data(id)) throw Error(ErrorCode::IrreversibleSequence, "reserved token " + units_[id] + " inside data");
      const auto& s = units_[id];
      for (std::size_t i = 0; i < s.size(); i += 2) {
        out.push_back(static_cast<std::uint8_t>((detail::hex_nibble(s[i]) << 4) | detail::hex_nibble(s[i + 1])));
      }
    }
    return out;
  }

  /// Text format:
  ///   TFVOCAB 1 <base unit count> <merge count>
  ///   one base unit per line (reserved names first, in id order)
  ///   one merge per line: "<left unit> <right unit>", in rank order
  std::string serialize() const {
    std::ostringstream out;
    out << "TFVOCAB 1 " << base_size_ << ' ' << merges_.size() << '\n';
    for (std::size_t i = 0; i < base_size_; ++i) out << units_[i] << '\n';
    for (auto [a, b] : merges_) out << units_[a] << ' ' << units_[b] << '\n';
    return out.str();
  }

  static Vocabulary parse(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string magic;
    int version = 0;
    std::size_t n_base = 0, n_merges = 0;
    if (!(in >> magic >> version >> n_base >> n_merges) || magic != "TFVOCAB") {
      throw Error(ErrorCode::BadMagic, "not a vocabulary file");
    }
    if (version != 1) throw Error(ErrorCode::VersionMismatch, "vocabulary version " + std::to_string(version));
    if (n_base < kMinVocabSize) throw Error(ErrorCode::CorruptTable, "base too small");
    std::vector<std::string> lines(n_base);
    for (auto& l : lines) {
      if (!(in >> l)) throw Error(ErrorCode::CorruptTable, "truncated unit list");
    }
    const Vocabulary ref;
    for (TokenId id = 0; id < kMinVocabSize; ++id) {
      if (lines[id] != ref.units_[id]) throw Error(ErrorCode::CorruptTable, "unexpected unit at id " + std::to_string(id));
    }
    Vocabulary v(std::vector<std::string>(lines.begin() + kMinVocabSize, lines.end()));
    if (v.base_size_ != n_base) throw Error(ErrorCode::CorruptTable, "base units not sorted and unique");
    for (std::size_t i = kMinVocabSize; i < n_base; ++i) {
      if (v.units_[i] != lines[i]) throw Error(ErrorCode::CorruptTable, "base units not sorted");
    }
    for (std::size_t m = 0; m < n_merges; ++m) {
      std::string l, r;
      if (!(in >> l >> r)) throw Error(ErrorCode::CorruptTable, "truncated merge list");
      auto a = v.find(l);
      auto b = v.find(r);
      if (!a || !b) throw Error(ErrorCode::CorruptTable, "merge references undefined unit");
      v.add_merge(*a, *b);
    }
    return v;
  }

  bool operator==(const Vocabulary& o) const { return units_ == o.units_ && merges_ == o.merges_ && base_size_ == o.base_size_; }

 private:
  void push(std::string s) {
    index_.emplace(s, static_cast<TokenId>(units_.size()));
    units_.push_back(std::move(s));
  }

  std::vector<std::string> units_;
  std::unordered_map<std::string, TokenId> index_;
  std::vector<std::pair<TokenId, TokenId>> merges_;
  std::unordered_map<std::uint64_t, std::pair<std::uint32_t, TokenId>> ranks_;
  std::size_t base_size_ = 0;
};

struct BpeStats {
  std::size_t observed_bigrams = 0;
  std::size_t kept_bigrams = 0;
  std::size_t merges = 0;
};

/// Chooses the base bi-grams: all observed ones if they fit the budget,
/// otherwise the most frequent (ties by string).
inline std::vector<std::string> select_base_bigrams(const std::vector<std::vector<std::string>>& corpus,
                                                    std::size_t vocab_size, BpeStats* stats = nullptr) {
  if (vocab_size < kMinVocabSize) {
    throw Error(ErrorCode::VocabTooSmall, "vocab_size " + std::to_string(vocab_size) + " < " + std::to_string(kMinVocabSize));
  }
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& seq : corpus) {
    for (const auto& u : seq) {
      if (!detail::is_hex_unit(u) || u.size() > 4) throw Error(ErrorCode::InvalidArgument, "not a hex unit: '" + u + "'");
      if (u.size() == 4) ++counts[u];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  const std::size_t budget = vocab_size - kMinVocabSize;
  if (stats) stats->observed_bigrams = ranked.size();
  if (ranked.size() > budget) {
    std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
      return x.second != y.second ? x.second > y.second : x.first < y.first;
    });
    ranked.resize(budget);
  }
  std::vector<std::string> out;
  for (auto& [s, c] : ranked) out.push_back(s);
  std::sort(out.begin(), out.end());
  if (stats) stats->kept_bigrams = out.size();
  return out;
}

/// Trains merges until the vocabulary reaches vocab_size or no adjacent pair
/// occurs at least twice. Pair counts include overlapping occurrences; the
/// most frequent pair wins, ties going to the lexicographically smallest
/// concatenation (then the smallest left unit).
inline Vocabulary train_bpe(const std::vector<std::vector<std::string>>& corpus, std::size_t vocab_size,
                            BpeStats* stats = nullptr) {
  Vocabulary vocab(select_base_bigrams(corpus, vocab_size, stats));

  // Flattened corpus with per-sequence linked lists.
  std::vector<TokenId> tok;
  std::vector<std::int64_t> next, prev;
  for (const auto& seq : corpus) {
    const std::size_t begin = tok.size();
    vocab.append_base_ids(seq, tok);
    for (std::size_t i = begin; i < tok.size(); ++i) {
      prev.push_back(i == begin ? -1 : static_cast<std::int64_t>(i) - 1);
      next.push_back(i + 1 == tok.size() ? -1 : static_cast<std::int64_t>(i) + 1);
    }
  }
  std::vector<char> alive(tok.size(), 1);

  std::unordered_map<std::uint64_t, std::int64_t> counts;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> where;
  for (std::size_t i = 0; i < tok.size(); ++i) {
    if (next[i] < 0) continue;
    const auto k = detail::pair_key(tok[i], tok[static_cast<std::size_t>(next[i])]);
    ++counts[k];
    where[k].push_back(static_cast<std::uint32_t>(i));
  }

  struct Entry {
    std::int64_t count;
    TokenId a, b;
  };
  const auto& units = vocab.units();
  auto worse = [&units](const Entry& x, const Entry& y) {
    if (x.count != y.count) return x.count < y.count;
    const int c = detail::compare_concat(units[x.a], units[x.b], units[y.a], units[y.b]);
    if (c != 0) return c > 0;
    return units[x.a] > units[y.a];
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(worse)> heap(worse);
  for (auto& [k, c] : counts) heap.push({c, static_cast<TokenId>(k >> 32), static_cast<TokenId>(k & 0xFFFFFFFF)});

  auto bump = [&](TokenId a, TokenId b, std::int64_t delta, std::int64_t pos) {
    const auto k = detail::pair_key(a, b);
    auto& c = counts[k];
    c += delta;
    if (delta > 0) where[k].push_back(static_cast<std::uint32_t>(pos));
    if (c > 0) heap.push({c, a, b});
  };

  std::size_t n_merges = 0;
  while (vocab.size() < vocab_size && !heap.empty()) {
    const Entry top = heap.top();
    heap.pop();
    const auto key = detail::pair_key(top.a, top.b);
    auto cit = counts.find(key);
    if (cit == counts.end() || cit->second != top.count) continue;  // stale
    if (top.count < 2) break;
    const TokenId a = top.a, b = top.b;
    const TokenId c = vocab.add_merge(a, b);
    ++n_merges;

    auto positions = std::move(where[key]);
    where.erase(key);
    std::sort(positions.begin(), positions.end());
    positions.erase(std::unique(positions.begin(), positions.end()), positions.end());
    for (const auto p32 : positions) {
      const auto p = static_cast<std::int64_t>(p32);
      if (!alive[p] || tok[p] != a) continue;
      const std::int64_t q = next[p];
      if (q < 0 || tok[q] != b) continue;
      const std::int64_t before = prev[p];
      const std::int64_t after = next[q];
      if (before >= 0) bump(tok[before], a, -1, before);
      bump(a, b, -1, p);
      if (after >= 0) bump(b, tok[after], -1, q);
      tok[p] = c;
      alive[q] = 0;
      next[p] = after;
      if (after >= 0) prev[after] = p;
      if (before >= 0) bump(tok[before], c, +1, before);
      if (after >= 0) bump(c, tok[after], +1, p);
    }
  }
  if (stats) stats->merges = n_merges;
  return vocab;
}

inline Vocabulary train_bpe(std::span<const Bytes> byte_corpus, std::size_t vocab_size, BpeStats* stats = nullptr) {
  std::vector<std::vector<std::string>> corpus;
  corpus.reserve(byte_corpus.size());
  for (const auto& b : byte_corpus) corpus.push_back(bytes_to_hex_units(b));
  return train_bpe(corpus, vocab_size, stats);
}

// ---------------------------------------------------------------------------
// Sequences

struct EncodeOptions {
  std::size_t max_len = 512;
  bool include_header = true;
  bool time_tokens = false;
};

/// Maps a token range back to the bytes of one packet.
struct PacketSpan {
  std::size_t token_begin = 0;
  std::size_t token_end = 0;
  std::size_t packet_index = 0;
  std::size_t byte_begin = 0;
  std::size_t byte_end = 0;
};

struct TokenSequence {
  std::vector<TokenId> ids;
  std::vector<std::uint8_t> segments;
  std::optional<std::vector<PacketSpan>> boundaries;
  bool truncated = false;

  std::size_t size() const { return ids.size(); }
};

/// The bytes a packet contributes to its token sequence.
inline ByteView packet_bytes(const Packet& p, bool include_header) {
  return include_header ? ByteView(p.link_bytes).subspan(p.ip_offset, p.payload_offset + p.payload_length - p.ip_offset)
                        : p.payload();
}

namespace detail {

inline void truncate_keeping_sep(TokenSequence& seq, std::size_t max_len) {
  if (seq.ids.size() <= max_len) return;
  seq.ids.resize(max_len - 1);
  seq.ids.push_back(special::sep);
  seq.segments.resize(max_len);
  seq.truncated = true;
  seq.boundaries.reset();
}

}  // namespace detail

/// [CLS] u(p1) [PKT] u(p2) ... [SEP], optionally with a [TIME_e] token in
/// front of each packet.
inline TokenSequence encode_packets(std::span<const Packet> packets, const Vocabulary& vocab, const EncodeOptions& opt) {
  if (opt.max_len < 2) throw Error(ErrorCode::InvalidArgument, "max_len must be at least 2");
  TokenSequence seq;
  seq.ids.push_back(special::cls);
  std::vector<PacketSpan> spans;
  for (std::size_t i = 0; i < packets.size(); ++i) {
    if (i > 0) seq.ids.push_back(special::pkt);
    if (opt.time_tokens) {
      const std::int64_t delta = i == 0 ? 0 : std::max<std::int64_t>(0, packets[i].timestamp_us - packets[i - 1].timestamp_us);
      seq.ids.push_back(time_interval_token(delta));
    }
    const ByteView bytes = packet_bytes(packets[i], opt.include_header);
    const auto ids = vocab.encode(bytes);
    spans.push_back({seq.ids.size(), seq.ids.size() + ids.size(), i, 0, bytes.size()});
    seq.ids.insert(seq.ids.end(), ids.begin(), ids.end());
  }
  seq.ids.push_back(special::sep);
  seq.segments.assign(seq.ids.size(), 0);
  seq.boundaries = std::move(spans);
  detail::truncate_keeping_sep(seq, opt.max_len);
  return seq;
}

inline TokenSequence encode_burst(const Burst& burst, const Vocabulary& vocab, const EncodeOptions& opt = {}) {
  if (burst.packets.empty()) throw Error(ErrorCode::EmptyBurst, "burst has no packets");
  return encode_packets(burst.packets, vocab, opt);
}

/// [CLS] A [SEP] B [SEP] from two encoded sequences (their own [CLS]/[SEP]
/// framing is stripped). Segment 0 covers [CLS] A [SEP], segment 1 the rest.
/// Over-length pairs lose tokens from the end of the longer side first.
inline TokenSequence encode_pair(const TokenSequence& a, const TokenSequence& b, std::size_t max_len) {
  if (a.ids.empty() || b.ids.empty()) throw Error(ErrorCode::EmptyInput, "pair side is empty");
  if (max_len < 3) throw Error(ErrorCode::InvalidArgument, "max_len must be at least 3");
  auto strip = [](const TokenSequence& s, std::size_t& lead) {
    std::size_t begin = 0, end = s.ids.size();
    if (begin < end && s.ids[begin] == special::cls) ++begin;
    if (begin < end && s.ids[end - 1] == special::sep) --end;
    lead = begin;
    return std::vector<TokenId>(s.ids.begin() + static_cast<std::ptrdiff_t>(begin), s.ids.begin() + static_cast<std::ptrdiff_t>(end));
  };
  std::size_t lead_a = 0, lead_b = 0;
  auto da = strip(a, lead_a);
  auto db = strip(b, lead_b);
  bool trimmed = false;
  while (3 + da.size() + db.size() > max_len) {
    trimmed = true;
    if (da.size() >= db.size()) da.pop_back();
    else db.pop_back();
  }
  TokenSequence out;
  out.ids.push_back(special::cls);
  out.ids.insert(out.ids.end(), da.begin(), da.end());
  out.ids.push_back(special::sep);
  out.segments.assign(out.ids.size(), 0);
  out.ids.insert(out.ids.end(), db.begin(), db.end());
  out.ids.push_back(special::sep);
  out.segments.resize(out.ids.size(), 1);
  out.truncated = trimmed || a.truncated || b.truncated;
  if (!out.truncated && a.boundaries && b.boundaries) {
    std::vector<PacketSpan> spans;
    for (auto s : *a.boundaries) {
      s.token_begin = s.token_begin - lead_a + 1;
      s.token_end = s.token_end - lead_a + 1;
      spans.push_back(s);
    }
    const std::size_t shift = 2 + da.size();
    for (auto s : *b.boundaries) {
      s.token_begin = s.token_begin - lead_b + shift;
      s.token_end = s.token_end - lead_b + shift;
      s.packet_index += a.boundaries->size();
      spans.push_back(s);
    }
    out.boundaries = std::move(spans);
  }
  return out;
}

/// Exact bytes per packet of an untruncated encoding.
inline std::vector<Bytes> reverse_tokens(const TokenSequence& seq, const Vocabulary& vocab) {
  for (TokenId id : seq.ids) {
    if (id >= vocab.size()) throw Error(ErrorCode::UnknownToken, "id " + std::to_string(id) + " >= vocab size");
  }
  if (seq.truncated) throw Error(ErrorCode::IrreversibleSequence, "sequence was truncated");
  if (!seq.boundaries) throw Error(ErrorCode::IrreversibleSequence, "sequence has no boundary map");
  std::vector<Bytes> out;
  for (const auto& s : *seq.boundaries) {
    if (s.token_end > seq.ids.size() || s.token_begin > s.token_end) {
      throw Error(ErrorCode::IrreversibleSequence, "boundary outside sequence");
    }
    auto bytes = vocab.decode(std::span(seq.ids).subspan(s.token_begin, s.token_end - s.token_begin));
    if (bytes.size() != s.byte_end - s.byte_begin) throw Error(ErrorCode::IrreversibleSequence, "byte length mismatch");
    out.push_back(std::move(bytes));
  }
  return out;
}

struct Field {
  std::string name;
  std::size_t begin = 0;  // byte offsets within the transport segment
  std::size_t end = 0;
};

/// Fixed-offset protocol field map over the transport header and payload.
inline std::vector<Field> field_segment(const Packet& p) {
  std::vector<Field> out;
  const std::size_t seg = p.payload_offset + p.payload_length - p.transport_offset;
  if (p.is_tcp()) {
    static constexpr std::pair<const char*, std::size_t> layout[] = {
        {"src_port", 2}, {"dst_port", 2}, {"seq", 4}, {"ack", 4}, {"offset_flags", 2}, {"window", 2}, {"checksum", 2}, {"urgent", 2}};
    std::size_t off = 0;
    for (auto [name, len] : layout) {
      out.push_back({name, off, off + len});
      off += len;
    }
    if (p.transport_header_length > 20) out.push_back({"options", 20, p.transport_header_length});
  } else if (p.is_udp()) {
    static constexpr const char* names[] = {"src_port", "dst_port", "length", "checksum"};
    for (std::size_t i = 0; i < 4; ++i) out.push_back({names[i], 2 * i, 2 * i + 2});
  } else {
    out.push_back({"opaque", 0, seg});
    return out;
  }
  out.push_back({"payload", p.transport_header_length, seg});
  return out;
}

struct TokenRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Groups the data tokens of an encoded sequence by the protocol field their
/// first byte falls in. With headers included the IP header is one field.
inline std::vector<TokenRange> field_token_spans(std::span<const Packet> packets, const TokenSequence& seq,
                                                 const Vocabulary& vocab, bool include_header) {
  if (!seq.boundaries) throw Error(ErrorCode::IrreversibleSequence, "field spans need a boundary map");
  std::vector<TokenRange> out;
  for (const auto& span : *seq.boundaries) {
    const Packet& p = packets[span.packet_index];
    std::vector<std::pair<std::size_t, std::size_t>> fields;  // byte ranges in encoded coordinates
    if (include_header) {
      fields.emplace_back(0, p.ip.header_length);
      for (const auto& f : field_segment(p)) fields.emplace_back(f.begin + p.ip.header_length, f.end + p.ip.header_length);
    } else {
      fields.emplace_back(0, p.payload_length);
    }
    std::size_t byte = 0;
    std::size_t current = fields.size();
    for (std::size_t t = span.token_begin; t < span.token_end; ++t) {
      std::size_t f = 0;
      while (f + 1 < fields.size() && byte >= fields[f].second) ++f;
      if (f != current) {
        out.push_back({t, t + 1});
        current = f;
      } else {
        out.back().end = t + 1;
      }
      byte += vocab.byte_length(seq.ids[t]);
    }
  }
  return out;
}

}  // namespace trafficlm
