#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "trafficlm/error.hpp"
#include "trafficlm/flow.hpp"
#include "trafficlm/mfr.hpp"
#include "trafficlm/nn/checkpoint.hpp"
#include "trafficlm/nn/model.hpp"
#include "trafficlm/nn/ops.hpp"
#include "trafficlm/nn/optim.hpp"
#include "trafficlm/rng.hpp"
#include "trafficlm/tokenize.hpp"

namespace trafficlm {

enum class ObjectiveKind { masked_token, masked_field, masked_span, masked_patch, same_origin, packet_order, next_token };

inline std::string to_string(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::masked_token: return "masked_token";
    case ObjectiveKind::masked_field: return "masked_field";
    case ObjectiveKind::masked_span: return "masked_span";
    case ObjectiveKind::masked_patch: return "masked_patch";
    case ObjectiveKind::same_origin: return "same_origin";
    case ObjectiveKind::packet_order: return "packet_order";
    case ObjectiveKind::next_token: return "next_token";
  }
  return "?";
}

inline ObjectiveKind parse_objective(const std::string& s) {
  for (auto k : {ObjectiveKind::masked_token, ObjectiveKind::masked_field, ObjectiveKind::masked_span, ObjectiveKind::masked_patch,
                 ObjectiveKind::same_origin, ObjectiveKind::packet_order, ObjectiveKind::next_token}) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorCode::Config, "unknown objective '" + s + "'");
}

inline bool is_masking(ObjectiveKind k) {
  return k == ObjectiveKind::masked_token || k == ObjectiveKind::masked_field || k == ObjectiveKind::masked_span ||
         k == ObjectiveKind::masked_patch;
}

struct ObjectiveConfig {
  ObjectiveKind kind = ObjectiveKind::masked_token;
  double mask_ratio = 0.15;
  double span_mean_len = 3.0;
  std::size_t batch_size = 32;
  std::size_t steps = 1000;
  nn::AdamConfig adam;
  std::size_t checkpoint_every = 0;  // 0 = only at the end
  std::size_t patch_size = 4;        // masked_patch
  bool include_header = true;        // token objectives

  /// Defaults for an objective; masked_patch masks 90% of patches.
  static ObjectiveConfig for_kind(ObjectiveKind k) {
    ObjectiveConfig c;
    c.kind = k;
    if (k == ObjectiveKind::masked_patch) c.mask_ratio = 0.9;
    return c;
  }

  void validate() const {
    if (is_masking(kind) && !(mask_ratio > 0.0 && mask_ratio < 1.0)) {
      throw Error(ErrorCode::Config, "mask_ratio must lie in (0,1)");
    }
    if (steps == 0) throw Error(ErrorCode::Config, "steps must be positive");
    if (batch_size == 0) throw Error(ErrorCode::Config, "batch_size must be positive");
    if (kind == ObjectiveKind::masked_span && !(span_mean_len >= 1.0)) throw Error(ErrorCode::Config, "span_mean_len must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Masked token modeling

enum class MaskMode { token, field, span };

inline bool is_maskable(TokenId id) { return id >= kFirstDataId; }

/// One corrupted sequence. targets[i] holds the original id at masked
/// positions and nn::kIgnoreTarget elsewhere.
struct MaskedSequence {
  std::vector<TokenId> input;
  std::vector<std::uint8_t> segments;
  std::vector<std::int64_t> targets;
  std::vector<std::size_t> positions;  // sorted masked positions
};

namespace detail {

inline std::vector<std::size_t> choose_field_positions(const std::vector<TokenId>& ids, const std::vector<TokenRange>& fields,
                                                       std::size_t k, Rng& rng) {
  std::vector<std::size_t> order(fields.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order.begin(), order.end());
  std::vector<bool> taken(ids.size(), false);
  std::size_t count = 0;
  auto field_size = [&](const TokenRange& r) {
    std::size_t n = 0;
    for (std::size_t i = r.begin; i < std::min(r.end, ids.size()); ++i) n += is_maskable(ids[i]) && !taken[i];
    return n;
  };
  // Whole fields that fit the budget first, in random order.
  std::vector<std::size_t> partial;
  for (auto f : order) {
    const std::size_t n = field_size(fields[f]);
    if (n == 0) continue;
    if (count + n <= k) {
      for (std::size_t i = fields[f].begin; i < std::min(fields[f].end, ids.size()); ++i) {
        if (is_maskable(ids[i])) taken[i] = true;
      }
      count += n;
    } else {
      partial.push_back(f);
    }
  }
  // Then a prefix of the next field to hit the count exactly.
  for (auto f : partial) {
    for (std::size_t i = fields[f].begin; i < std::min(fields[f].end, ids.size()) && count < k; ++i) {
      if (is_maskable(ids[i]) && !taken[i]) {
        taken[i] = true;
        ++count;
      }
    }
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (taken[i]) out.push_back(i);
  }
  return out;
}

inline std::vector<std::size_t> choose_span_positions(const std::vector<std::size_t>& maskable, std::size_t k, double mean_len,
                                                      Rng& rng) {
  std::vector<bool> taken(maskable.size(), false);
  std::size_t count = 0;
  while (count < k) {
    std::vector<std::size_t> free;
    for (std::size_t i = 0; i < maskable.size(); ++i) {
      if (!taken[i]) free.push_back(i);
    }
    std::size_t at = free[rng.below(free.size())];
    std::size_t len = std::max<std::size_t>(1, rng.geometric(mean_len));
    while (len-- > 0 && at < maskable.size() && !taken[at] && count < k) {
      taken[at++] = true;
      ++count;
    }
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < maskable.size(); ++i) {
    if (taken[i]) out.push_back(maskable[i]);
  }
  return out;
}

}  // namespace detail

/// Corrupts floor(ratio * maskable) positions of each sequence. Token mode
/// replaces 80% with [MASK], 10% with a random data token and keeps 10%;
/// field and span modes always write [MASK]. Special tokens are never
/// chosen.
inline std::vector<MaskedSequence> mlm_batch(std::span<const TokenSequence> seqs, double ratio, MaskMode mode,
                                             std::span<const std::vector<TokenRange>> field_maps, std::size_t vocab_size,
                                             std::uint64_t seed, double span_mean_len = 3.0) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw Error(ErrorCode::InvalidArgument, "mask ratio outside [0,1]");
  if (mode == MaskMode::field && field_maps.size() != seqs.size()) {
    throw Error(ErrorCode::InvalidArgument, "field mode needs one field map per sequence");
  }
  if (vocab_size <= kFirstDataId) throw Error(ErrorCode::VocabTooSmall, "no data tokens to sample");
  std::vector<MaskedSequence> out;
  for (std::size_t s = 0; s < seqs.size(); ++s) {
    Rng rng(mix_seed(seed, s));
    const auto& ids = seqs[s].ids;
    std::vector<std::size_t> maskable;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (is_maskable(ids[i])) maskable.push_back(i);
    }
    if (maskable.empty()) throw Error(ErrorCode::NothingToMask, "sequence " + std::to_string(s) + " has no maskable token");
    const std::size_t k = masked_count(ratio, maskable.size());
    std::vector<std::size_t> chosen;
    if (mode == MaskMode::token) {
      for (auto i : rng.sample(maskable.size(), k)) chosen.push_back(maskable[i]);
      std::sort(chosen.begin(), chosen.end());
    } else if (mode == MaskMode::field) {
      chosen = detail::choose_field_positions(ids, field_maps[s], k, rng);
    } else {
      chosen = detail::choose_span_positions(maskable, k, span_mean_len, rng);
    }
    MaskedSequence m;
    m.input = ids;
    m.segments = seqs[s].segments.empty() ? std::vector<std::uint8_t>(ids.size(), 0) : seqs[s].segments;
    m.targets.assign(ids.size(), nn::kIgnoreTarget);
    m.positions = chosen;
    for (auto p : chosen) {
      m.targets[p] = ids[p];
      if (mode != MaskMode::token) {
        m.input[p] = special::mask;
        continue;
      }
      const double u = rng.uniform();
      if (u < 0.8) {
        m.input[p] = special::mask;
      } else if (u < 0.9) {
        m.input[p] = static_cast<TokenId>(kFirstDataId + rng.below(vocab_size - kFirstDataId));
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Masked patch modeling

struct MaeExample {
  std::size_t total = 0;
  std::size_t patch_dim = 0;
  std::vector<std::size_t> visible_index;
  std::vector<std::size_t> mask_index;
  std::vector<double> visible;  // visible_index.size() x patch_dim, scaled to [0,1]
  std::vector<double> target;   // mask_index.size() x patch_dim, scaled to [0,1]
};

inline MaeExample mae_example(const PatchSet& masked) {
  MaeExample ex;
  ex.total = masked.count();
  ex.patch_dim = masked.patch_dim;
  for (std::size_t i = 0; i < masked.count(); ++i) {
    auto& dst = masked.is_masked(i) ? ex.target : ex.visible;
    (masked.is_masked(i) ? ex.mask_index : ex.visible_index).push_back(i);
    for (auto b : masked.patch(i)) dst.push_back(b / 255.0);
  }
  return ex;
}

/// Per flow: image, patches, then floor(ratio * n) masked patches.
inline std::vector<MaeExample> mae_batch(std::span<const Flow> flows, double ratio, std::size_t patch_size, std::uint64_t seed) {
  if (flows.empty()) throw Error(ErrorCode::EmptyFlow, "no flows to mask");
  std::vector<MaeExample> out;
  for (std::size_t i = 0; i < flows.size(); ++i) {
    const PatchSet p = mask_patches(patchify(build_mfr(flows[i]), patch_size), ratio, mix_seed(seed, i));
    if (p.mask.empty()) throw Error(ErrorCode::NothingToMask, "mask ratio selects no patch");
    if (p.mask.size() == p.count()) throw Error(ErrorCode::InvalidArgument, "mask ratio leaves no visible patch");
    out.push_back(mae_example(p));
  }
  return out;
}

/// MSE between the reconstruction (total x patch_dim) and the targets, over
/// masked patches only.
template <typename T>
nn::Tensor<T> mae_reconstruction_loss(const nn::Tensor<T>& reconstruction, const MaeExample& ex) {
  if (ex.mask_index.empty()) throw Error(ErrorCode::NothingToMask, "no masked patch");
  if (reconstruction.rows() != ex.total || reconstruction.cols() != ex.patch_dim) {
    throw Error(ErrorCode::ShapeMismatch, "reconstruction shape");
  }
  const std::vector<T> target(ex.target.begin(), ex.target.end());
  return nn::mse(nn::gather_rows(reconstruction, std::span<const std::size_t>(ex.mask_index)), std::span<const T>(target));
}

template <typename T>
nn::Tensor<T> mae_forward(const nn::TrafficModel<T>& model, const MaeExample& ex, const nn::ForwardOptions& opt = {}) {
  auto vis = nn::Tensor<T>::constant(ex.visible_index.size(), ex.patch_dim, std::vector<T>(ex.visible.begin(), ex.visible.end()));
  auto hidden = model.encode_features(vis, ex.visible_index, opt);
  return model.mae_reconstruct(hidden, ex.visible_index, ex.total, opt);
}

// ---------------------------------------------------------------------------
// Same-origin prediction

struct PairExample {
  TokenSequence seq;
  std::int32_t label = 0;  // 1 = both halves from the same flow
  std::size_t flow_a = 0;
  std::size_t flow_b = 0;
};

namespace detail {

/// Index of the bursts with at least two packets.
inline std::vector<Burst> splittable_bursts(const Flow& f) {
  std::vector<Burst> out;
  if (f.packets.empty()) return out;
  for (const auto& b : segment_bursts(f)) {
    if (b.size() >= 2) out.push_back(b);
  }
  return out;
}

}  // namespace detail

/// n_pairs examples, n_pairs/2 positive (the two halves of one burst) and
/// the rest negative (first half of one flow's burst, second half of
/// another flow's), shuffled.
inline std::vector<PairExample> same_origin_batch(std::span<const Flow> flows, const Vocabulary& vocab, std::size_t n_pairs,
                                                  std::uint64_t seed, const EncodeOptions& opt = {}) {
  std::vector<std::size_t> eligible;
  std::vector<std::vector<Burst>> bursts(flows.size());
  for (std::size_t i = 0; i < flows.size(); ++i) {
    bursts[i] = detail::splittable_bursts(flows[i]);
    if (!bursts[i].empty()) eligible.push_back(i);
  }
  if (eligible.size() < 2) throw Error(ErrorCode::InsufficientFlows, "same-origin pairs need two flows with a multi-packet burst");
  Rng rng(seed);
  auto half = [&](std::size_t flow, bool second) {
    const Burst& b = bursts[flow][rng.below(bursts[flow].size())];
    const std::size_t mid = b.size() / 2;
    Burst part{second ? b.packets.subspan(mid) : b.packets.first(mid), b.offset + (second ? mid : 0)};
    EncodeOptions o = opt;
    o.max_len = std::max<std::size_t>(opt.max_len, 4096);
    return encode_burst(part, vocab, o);
  };
  std::vector<PairExample> out;
  const std::size_t positives = n_pairs / 2;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    PairExample ex;
    ex.flow_a = eligible[rng.below(eligible.size())];
    if (i < positives) {
      ex.label = 1;
      ex.flow_b = ex.flow_a;
      const Burst& b = bursts[ex.flow_a][rng.below(bursts[ex.flow_a].size())];
      const std::size_t mid = b.size() / 2;
      EncodeOptions o = opt;
      o.max_len = std::max<std::size_t>(opt.max_len, 4096);
      ex.seq = encode_pair(encode_burst(Burst{b.packets.first(mid), b.offset}, vocab, o),
                           encode_burst(Burst{b.packets.subspan(mid), b.offset + mid}, vocab, o), opt.max_len);
    } else {
      ex.label = 0;
      do {
        ex.flow_b = eligible[rng.below(eligible.size())];
      } while (ex.flow_b == ex.flow_a);
      auto a = half(ex.flow_a, false);
      auto b = half(ex.flow_b, true);
      ex.seq = encode_pair(a, b, opt.max_len);
    }
    out.push_back(std::move(ex));
  }
  rng.shuffle(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Packet order prediction

/// Lexicographic rank of a permutation of {0,1,2}.
inline int permutation_class(const std::array<int, 3>& perm) {
  static constexpr int factorial[] = {2, 1, 1};
  int rank = 0;
  for (int i = 0; i < 3; ++i) {
    int smaller = 0;
    for (int j = i + 1; j < 3; ++j) smaller += perm[j] < perm[i];
    rank += smaller * factorial[i];
  }
  return rank;
}

inline std::array<int, 3> permutation_of_class(int cls) {
  if (cls < 0 || cls > 5) throw Error(ErrorCode::InvalidArgument, "permutation class outside 0..5");
  std::array<int, 3> p{0, 1, 2};
  for (int i = 0; i < cls; ++i) std::next_permutation(p.begin(), p.end());
  return p;
}

struct OrderExample {
  TokenSequence seq;
  std::int32_t label = 0;  // permutation class
  std::size_t flow = 0;
};

struct OrderBatch {
  std::vector<OrderExample> items;
  std::size_t skipped = 0;  // flows with fewer than three packets
};

/// Position i of the shuffled sequence holds original packet perm[i].
inline TokenSequence encode_permuted(const Flow& f, const std::array<int, 3>& perm, const Vocabulary& vocab,
                                     const EncodeOptions& opt) {
  std::vector<Packet> pk;
  for (int i : perm) pk.push_back(f.packets[static_cast<std::size_t>(i)]);
  return encode_packets(pk, vocab, opt);
}

/// One example per eligible flow with a uniformly drawn permutation of its
/// first three packets.
inline OrderBatch packet_order_batch(std::span<const Flow> flows, const Vocabulary& vocab, std::uint64_t seed,
                                     const EncodeOptions& opt = {}) {
  OrderBatch out;
  Rng rng(seed);
  for (std::size_t i = 0; i < flows.size(); ++i) {
    if (flows[i].packets.size() < 3) {
      ++out.skipped;
      continue;
    }
    const int cls = static_cast<int>(rng.below(6));
    out.items.push_back({encode_permuted(flows[i], permutation_of_class(cls), vocab, opt), cls, i});
  }
  if (out.items.empty()) throw Error(ErrorCode::NoEligibleFlows, "no flow has three packets");
  return out;
}

// ---------------------------------------------------------------------------
// Next-token prediction

struct NextTokenExample {
  std::vector<TokenId> input;
  std::vector<std::int64_t> target;  // kIgnoreTarget where the target is [PAD]
};

inline NextTokenExample next_token_example(std::span<const TokenId> ids) {
  if (ids.size() < 2) throw Error(ErrorCode::TooShort, "next-token prediction needs two tokens");
  NextTokenExample ex;
  ex.input.assign(ids.begin(), ids.end() - 1);
  for (std::size_t i = 1; i < ids.size(); ++i) {
    ex.target.push_back(ids[i] == special::pad ? nn::kIgnoreTarget : static_cast<std::int64_t>(ids[i]));
  }
  return ex;
}

/// Tokens of a flow's first three packets, with inter-arrival [TIME] tokens.
inline TokenSequence first_packets_sequence(const Flow& f, const Vocabulary& vocab, std::size_t max_len,
                                            bool include_header = true) {
  if (f.packets.empty()) throw Error(ErrorCode::EmptyFlow, "empty flow");
  const std::size_t n = std::min<std::size_t>(3, f.packets.size());
  return encode_packets(std::span(f.packets).first(n), vocab, {max_len, include_header, true});
}

inline std::vector<NextTokenExample> next_token_batch(std::span<const TokenSequence> seqs) {
  std::vector<NextTokenExample> out;
  for (const auto& s : seqs) out.push_back(next_token_example(s.ids));
  return out;
}

// ---------------------------------------------------------------------------
// Training loop

struct PretrainCorpus {
  std::span<const Flow> flows;
  const Vocabulary* vocab = nullptr;
};

struct LossRecord {
  std::size_t step = 0;
  ObjectiveKind objective = ObjectiveKind::masked_token;
  double loss = 0.0;
  double lr = 0.0;
};

template <typename T>
struct TrainResult {
  nn::Checkpoint<T> checkpoint;
  std::vector<LossRecord> history;
  std::vector<nn::Checkpoint<T>> snapshots;  // every checkpoint_every steps
};

inline std::string loss_history_csv(std::span<const LossRecord> history) {
  std::ostringstream out;
  out.precision(17);
  out << "step,objective,loss\n";
  for (const auto& r : history) out << r.step << ',' << to_string(r.objective) << ',' << r.loss << '\n';
  return out.str();
}

namespace detail {

struct TokenPoolItem {
  TokenSequence seq;
  std::vector<TokenRange> fields;
};

/// Burst encodings of every flow, truncated to max_len, with field maps.
inline std::vector<TokenPoolItem> burst_pool(std::span<const Flow> flows, const Vocabulary& vocab, std::size_t max_len,
                                             bool include_header) {
  std::vector<TokenPoolItem> pool;
  for (const auto& f : flows) {
    if (f.packets.empty()) continue;
    for (const auto& b : segment_bursts(f)) {
      TokenPoolItem it;
      it.seq = encode_burst(b, vocab, {std::numeric_limits<std::size_t>::max(), include_header, false});
      it.fields = field_token_spans(b.packets, it.seq, vocab, include_header);
      truncate_keeping_sep(it.seq, max_len);
      std::vector<TokenRange> kept;
      for (auto r : it.fields) {
        r.end = std::min(r.end, it.seq.ids.size() - 1);
        if (r.begin < r.end) kept.push_back(r);
      }
      it.fields = std::move(kept);
      bool any = false;
      for (auto id : it.seq.ids) any = any || is_maskable(id);
      if (any) pool.push_back(std::move(it));
    }
  }
  return pool;
}

inline void check_compatible(const nn::ModelConfig& mc, const ObjectiveConfig& oc, const PretrainCorpus& corpus) {
  const bool decoder = mc.mode == nn::ModelMode::decoder;
  if ((oc.kind == ObjectiveKind::next_token) != decoder) {
    throw Error(ErrorCode::IncompatibleObjective, to_string(oc.kind) + " cannot train a " + nn::to_string(mc.mode) + " model");
  }
  if (oc.kind == ObjectiveKind::masked_patch) {
    if (mc.patch_dim != oc.patch_size * oc.patch_size || mc.mae_decoder_layers == 0) {
      throw Error(ErrorCode::IncompatibleObjective, "masked_patch needs patch_dim = patch_size^2 and a reconstruction decoder");
    }
    if (mc.max_len < MfrMatrix::rows * MfrMatrix::cols / mc.patch_dim) throw Error(ErrorCode::IncompatibleObjective, "max_len is shorter than the patch count");
  } else {
    if (!corpus.vocab) throw Error(ErrorCode::IncompatibleObjective, to_string(oc.kind) + " needs a vocabulary");
    if (mc.vocab_size < corpus.vocab->size()) throw Error(ErrorCode::IncompatibleObjective, "model vocabulary is smaller than the tokenizer's");
  }
}

}  // namespace detail

/// Per-example losses for one step of the objective, built on `model`.
/// Exposed so evaluation and tests can reuse the exact training loss.
template <typename T>
nn::Tensor<T> masked_token_loss(const nn::TrafficModel<T>& model, const MaskedSequence& m, const nn::ForwardOptions& opt = {}) {
  if (m.positions.empty()) throw Error(ErrorCode::NothingToMask, "no masked position");
  auto hidden = model.encode_tokens(m.input, m.segments, opt);
  std::vector<std::int64_t> tg;
  for (auto p : m.positions) tg.push_back(m.targets[p]);
  return nn::cross_entropy(model.token_logits(nn::gather_rows(hidden, std::span<const std::size_t>(m.positions))),
                           std::span<const std::int64_t>(tg));
}

template <typename T>
nn::Tensor<T> sequence_class_logits(const nn::TrafficModel<T>& model, const TokenSequence& seq, bool pair_head,
                                    const nn::ForwardOptions& opt = {}) {
  auto pooled = model.pool(model.encode_tokens(seq.ids, seq.segments, opt), true);
  return pair_head ? model.pair_logits(pooled) : model.order_logits(pooled);
}

template <typename T>
nn::Tensor<T> next_token_loss(const nn::TrafficModel<T>& model, const NextTokenExample& ex, const nn::ForwardOptions& opt = {}) {
  return nn::cross_entropy(model.decoder_logits(ex.input, opt), std::span<const std::int64_t>(ex.target));
}

/// Runs cfg.steps optimizer steps of one objective. Every step draws
/// batch_size examples (fresh masks / pairs / permutations) from a stream
/// seeded by `seed`; results are identical for identical inputs.
template <typename T>
TrainResult<T> train(nn::TrafficModel<T>& model, const ObjectiveConfig& cfg, const PretrainCorpus& corpus, std::uint64_t seed) {
  cfg.validate();
  if (corpus.flows.empty()) throw Error(ErrorCode::EmptyCorpus, "no flows to train on");
  detail::check_compatible(model.config(), cfg, corpus);
  const std::size_t max_len = model.config().max_len;
  const EncodeOptions enc{max_len, cfg.include_header, false};

  std::vector<detail::TokenPoolItem> token_pool;
  std::vector<PatchSet> patch_pool;
  std::vector<TokenSequence> next_pool;
  std::vector<std::size_t> order_pool;
  switch (cfg.kind) {
    case ObjectiveKind::masked_token:
    case ObjectiveKind::masked_field:
    case ObjectiveKind::masked_span:
      token_pool = detail::burst_pool(corpus.flows, *corpus.vocab, max_len, cfg.include_header);
      if (token_pool.empty()) throw Error(ErrorCode::EmptyCorpus, "no maskable burst");
      break;
    case ObjectiveKind::masked_patch:
      for (const auto& f : corpus.flows) {
        if (!f.packets.empty()) patch_pool.push_back(patchify(build_mfr(f), cfg.patch_size));
      }
      if (patch_pool.empty()) throw Error(ErrorCode::EmptyCorpus, "no non-empty flow");
      break;
    case ObjectiveKind::next_token:
      for (const auto& f : corpus.flows) {
        if (f.packets.empty()) continue;
        auto s = first_packets_sequence(f, *corpus.vocab, max_len + 1, cfg.include_header);
        if (s.ids.size() >= 2) next_pool.push_back(std::move(s));
      }
      if (next_pool.empty()) throw Error(ErrorCode::EmptyCorpus, "no sequence of two tokens");
      break;
    case ObjectiveKind::packet_order:
      for (std::size_t i = 0; i < corpus.flows.size(); ++i) {
        if (corpus.flows[i].packets.size() >= 3) order_pool.push_back(i);
      }
      if (order_pool.empty()) throw Error(ErrorCode::NoEligibleFlows, "no flow has three packets");
      break;
    case ObjectiveKind::same_origin:
      break;
  }

  Rng rng(seed);
  nn::Adam<T> adam(model.params(), cfg.adam);
  TrainResult<T> result;
  const nn::ForwardOptions fwd{true, &rng, nullptr};
  const T inv_batch = T(1) / static_cast<T>(cfg.batch_size);
  const MaskMode mode = cfg.kind == ObjectiveKind::masked_field  ? MaskMode::field
                        : cfg.kind == ObjectiveKind::masked_span ? MaskMode::span
                                                                 : MaskMode::token;

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const std::uint64_t step_seed = mix_seed(seed, step);
    model.params().zero_grad();
    double total = 0;
    std::size_t used = 0;
    auto accumulate = [&](const nn::Tensor<T>& loss) {
      total += static_cast<double>(loss.item());
      ++used;
      nn::scale(loss, inv_batch).backward();
    };
    switch (cfg.kind) {
      case ObjectiveKind::masked_token:
      case ObjectiveKind::masked_field:
      case ObjectiveKind::masked_span: {
        std::vector<TokenSequence> seqs;
        std::vector<std::vector<TokenRange>> fields;
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
          const auto& it = token_pool[rng.below(token_pool.size())];
          seqs.push_back(it.seq);
          fields.push_back(it.fields);
        }
        for (const auto& m : mlm_batch(seqs, cfg.mask_ratio, mode, fields, model.config().vocab_size, step_seed, cfg.span_mean_len)) {
          if (!m.positions.empty()) accumulate(masked_token_loss(model, m, fwd));
        }
        break;
      }
      case ObjectiveKind::masked_patch: {
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
          const PatchSet masked = mask_patches(patch_pool[rng.below(patch_pool.size())], cfg.mask_ratio, mix_seed(step_seed, b));
          const MaeExample ex = mae_example(masked);
          if (ex.mask_index.empty() || ex.visible_index.empty()) throw Error(ErrorCode::NothingToMask, "degenerate patch mask");
          accumulate(mae_reconstruction_loss(mae_forward(model, ex, fwd), ex));
        }
        break;
      }
      case ObjectiveKind::same_origin: {
        for (const auto& ex : same_origin_batch(corpus.flows, *corpus.vocab, cfg.batch_size, step_seed, enc)) {
          const std::int64_t tg = ex.label;
          accumulate(nn::cross_entropy(sequence_class_logits(model, ex.seq, true, fwd), std::span<const std::int64_t>(&tg, 1)));
        }
        break;
      }
      case ObjectiveKind::packet_order: {
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
          const std::size_t f = order_pool[rng.below(order_pool.size())];
          const std::int64_t cls = static_cast<std::int64_t>(rng.below(6));
          const auto seq = encode_permuted(corpus.flows[f], permutation_of_class(static_cast<int>(cls)), *corpus.vocab, enc);
          accumulate(nn::cross_entropy(sequence_class_logits(model, seq, false, fwd), std::span<const std::int64_t>(&cls, 1)));
        }
        break;
      }
      case ObjectiveKind::next_token: {
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
          auto ids = next_pool[rng.below(next_pool.size())].ids;
          if (ids.size() > max_len + 1) ids.resize(max_len + 1);
          accumulate(next_token_loss(model, next_token_example(ids), fwd));
        }
        break;
      }
    }
    if (used == 0) throw Error(ErrorCode::NothingToMask, "step " + std::to_string(step) + " produced no target");
    const double lr = adam.next_lr();
    adam.step();
    result.history.push_back({step, cfg.kind, total / static_cast<double>(used), lr});
    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step < cfg.steps) {
      result.snapshots.push_back(nn::capture(model, step, &adam, &rng, "objective=" + to_string(cfg.kind)));
    }
  }
  result.checkpoint = nn::capture(model, cfg.steps, &adam, &rng, "objective=" + to_string(cfg.kind) + "\nseed=" + std::to_string(seed));
  return result;
}

// ---------------------------------------------------------------------------
// Held-out measurements of the objectives

/// Mean masked-patch MSE over the flows with masks fixed by seed.
template <typename T>
double evaluate_masked_patch(const nn::TrafficModel<T>& model, std::span<const Flow> flows, double ratio, std::size_t patch_size,
                             std::uint64_t seed) {
  double total = 0;
  const auto batch = mae_batch(flows, ratio, patch_size, seed);
  for (const auto& ex : batch) total += static_cast<double>(mae_reconstruction_loss(mae_forward(model, ex), ex).item());
  return total / static_cast<double>(batch.size());
}

/// Probability of the same-origin class for each example.
template <typename T>
std::vector<double> same_origin_scores(const nn::TrafficModel<T>& model, std::span<const PairExample> pairs) {
  std::vector<double> out;
  for (const auto& ex : pairs) {
    auto logits = sequence_class_logits(model, ex.seq, true);
    const auto p = nn::softmax_values<T>(logits.data());
    out.push_back(static_cast<double>(p[1]));
  }
  return out;
}

/// Argmax permutation class for each example.
template <typename T>
std::vector<std::int32_t> predict_packet_order(const nn::TrafficModel<T>& model, std::span<const OrderExample> items) {
  std::vector<std::int32_t> out;
  for (const auto& ex : items) {
    auto logits = sequence_class_logits(model, ex.seq, false);
    auto d = logits.data();
    out.push_back(static_cast<std::int32_t>(std::max_element(d.begin(), d.end()) - d.begin()));
  }
  return out;
}

}  // namespace trafficlm
