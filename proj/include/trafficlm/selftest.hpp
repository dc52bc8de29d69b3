#pragma once

// Built-in consistency checks: each compares a library routine with an
// independent reference on random inputs. Used by `trafficlm selftest` and
// the acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "trafficlm/eval.hpp"
#include "trafficlm/mfr.hpp"
#include "trafficlm/nn/checkpoint.hpp"
#include "trafficlm/pretrain.hpp"
#include "trafficlm/testing/fuzz.hpp"
#include "trafficlm/testing/gradient_suite.hpp"
#include "trafficlm/testing/oracles.hpp"
#include "trafficlm/tokenize.hpp"

namespace trafficlm::selftest {

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

inline constexpr double kOpGradTolerance = 1e-6;
inline constexpr double kModelGradTolerance = 1e-3;

namespace detail {

inline std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << v;
  return s.str();
}

}  // namespace detail

inline Check gradient_check(std::uint64_t seed = 1) {
  Check c{"gradients", true, {}};
  double op_worst = 0, model_worst = 0;
  for (const auto& g : testing::op_gradient_checks(seed)) {
    op_worst = std::max(op_worst, g.worst());
    if (!(g.worst() < kOpGradTolerance)) {
      c.passed = false;
      c.detail += g.name + " " + detail::fmt(g.worst()) + "; ";
    }
  }
  for (const auto& g : testing::model_gradient_checks(seed)) {
    model_worst = std::max(model_worst, g.worst());
    if (!(g.worst() < kModelGradTolerance)) {
      c.passed = false;
      c.detail += g.name + " " + detail::fmt(g.worst()) + "; ";
    }
  }
  c.detail += "max op error " + detail::fmt(op_worst) + ", max model error " + detail::fmt(model_worst);
  return c;
}

/// Empty string when train_bpe and the oracle agree on merges and units.
inline std::string bpe_disagreement(const std::vector<std::vector<std::string>>& corpus, std::size_t vocab_size) {
  const auto vocab = train_bpe(corpus, vocab_size);
  const auto ref = oracle::bpe(corpus, vocab_size);
  if (vocab.merges().size() != ref.merges.size()) {
    return "merge count " + std::to_string(vocab.merges().size()) + " vs " + std::to_string(ref.merges.size());
  }
  for (std::size_t i = 0; i < ref.merges.size(); ++i) {
    const auto [a, b] = vocab.merges()[i];
    if (vocab.unit(a) != ref.merges[i].first || vocab.unit(b) != ref.merges[i].second) {
      return "merge " + std::to_string(i) + " is " + vocab.unit(a) + "+" + vocab.unit(b) + ", expected " + ref.merges[i].first + "+" +
             ref.merges[i].second;
    }
  }
  std::set<std::string> mine(vocab.units().begin() + kFirstDataId, vocab.units().end());
  std::set<std::string> theirs;
  for (const auto& u : ref.units) {
    if (u[0] != '#') theirs.insert(u);
  }
  if (mine != theirs) return "unit sets differ";
  for (const auto& seq : corpus) {
    std::vector<TokenId> ids;
    vocab.append_base_ids(seq, ids);
    std::vector<std::string> got;
    for (auto id : vocab.apply_merges(std::move(ids))) got.push_back(vocab.unit(id));
    if (got != oracle::bpe_apply(seq, oracle::bpe_base(corpus, vocab_size), ref.merges)) return "encoding differs";
  }
  return {};
}

inline Check bpe_check(std::size_t corpora = 10, std::uint64_t seed = 2) {
  Check c{"bpe", true, {}};
  Rng rng(seed);
  for (std::size_t i = 0; i < corpora && c.passed; ++i) {
    const auto corpus = testing::random_bpe_corpus(rng);
    const std::size_t vocab_size = kMinVocabSize + rng.below(40);
    if (auto d = bpe_disagreement(corpus, vocab_size); !d.empty()) {
      c.passed = false;
      c.detail = "corpus " + std::to_string(i) + ": " + d;
    }
  }
  if (c.passed) c.detail = std::to_string(corpora) + " corpora match";
  return c;
}

inline Check metrics_check(std::size_t trials = 50, std::uint64_t seed = 3) {
  Check c{"metrics", true, {}};
  Rng rng(seed);
  double worst = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const int k = 2 + static_cast<int>(rng.below(5));
    const std::size_t n = 1 + rng.below(200);
    std::vector<std::int32_t> pred(n), truth(n);
    std::vector<int> pi(n), ti(n);
    for (std::size_t i = 0; i < n; ++i) {
      pi[i] = pred[i] = static_cast<std::int32_t>(rng.below(k));
      ti[i] = truth[i] = static_cast<std::int32_t>(rng.below(k));
    }
    const auto rep = classification_report(pred, truth, k);
    double acc = 0;
    const auto ref = oracle::confusion_metrics(pi, ti, k, &acc);
    double macro = 0;
    worst = std::max(worst, std::abs(rep.accuracy - acc));
    for (int j = 0; j < k; ++j) {
      worst = std::max({worst, std::abs(rep.per_class[j].precision - ref[j].precision), std::abs(rep.per_class[j].recall - ref[j].recall),
                        std::abs(rep.per_class[j].f1 - ref[j].f1)});
      macro += ref[j].f1 / k;
    }
    worst = std::max(worst, std::abs(rep.macro_f1 - macro));

    std::vector<double> a(1 + rng.below(60)), b(1 + rng.below(60));
    for (auto& x : a) x = static_cast<double>(rng.below(20));
    for (auto& x : b) x = static_cast<double>(rng.below(25));
    worst = std::max(worst, std::abs(ks_statistic(a, b) - oracle::ks(a, b)));

    std::vector<double> scores(2 + rng.below(80));
    std::vector<std::int32_t> labels(scores.size());
    std::vector<int> li(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
      scores[i] = static_cast<double>(rng.below(10));
      li[i] = labels[i] = static_cast<std::int32_t>(i < 2 ? i : rng.below(2));
    }
    worst = std::max(worst, std::abs(roc_auc(scores, labels) - oracle::auc(scores, li)));
  }
  c.passed = worst < 1e-12;
  c.detail = "max deviation " + detail::fmt(worst);
  return c;
}

inline Check enumeration_check() {
  Check c{"enumerations", true, {}};
  const auto perms = oracle::s3();
  for (int i = 0; i < 6; ++i) {
    if (permutation_class(perms[i]) != i || permutation_of_class(i) != perms[i]) {
      c.passed = false;
      c.detail = "permutation class " + std::to_string(i);
    }
  }
  std::vector<std::int64_t> deltas{0, 1, 2, 3, 4, 7, 8, 1023, 1024, 999'999, 1'000'000, (std::int64_t{1} << 31) - 1,
                                   std::int64_t{1} << 31, std::int64_t{1} << 40};
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) deltas.push_back(static_cast<std::int64_t>(rng.below(std::uint64_t{1} << (1 + rng.below(45)))));
  for (auto d : deltas) {
    if (time_interval_token(d) != special::time(oracle::time_bucket(d))) {
      c.passed = false;
      c.detail = "time bucket of " + std::to_string(d);
    }
  }
  if (c.passed) c.detail = "6 permutations, " + std::to_string(deltas.size()) + " intervals";
  return c;
}

inline Check checkpoint_check(std::uint64_t seed = 5) {
  Check c{"checkpoint", true, {}};
  nn::ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.n_layers = 2;
  cfg.ffn_dim = 32;
  cfg.max_len = 32;
  cfg.vocab_size = kMinVocabSize;
  cfg.patch_dim = 16;
  nn::TrafficModel<double> m(cfg, seed);
  m.attach_task(nn::TaskKind::classify, 4);
  Rng rng(seed);
  const auto bytes = nn::save_checkpoint(nn::capture<double>(m, 7, nullptr, &rng, "note=1"));
  const auto loaded = nn::load_checkpoint<double>(bytes);
  const auto again = nn::save_checkpoint(loaded);
  auto rebuilt = nn::model_from_checkpoint(loaded);
  const auto third = nn::save_checkpoint(nn::capture<double>(rebuilt, 7, nullptr, &rng, "note=1"));
  c.passed = again == bytes && third == bytes;
  c.detail = c.passed ? std::to_string(bytes.size()) + " bytes, identical after reload" : "bytes differ after reload";
  return c;
}

inline Check tokenization_check(std::size_t flows = 100, std::uint64_t seed = 6) {
  Check c{"tokenization", true, {}};
  Rng rng(seed);
  std::vector<Bytes> corpus;
  for (int i = 0; i < 20; ++i) corpus.push_back(testing::random_bytes(rng, 64));
  const auto vocab = train_bpe(corpus, kMinVocabSize + 64);
  for (std::size_t i = 0; i < flows && c.passed; ++i) {
    const auto f = testing::random_flow(rng);
    for (const bool header : {true, false}) {
      EncodeOptions opt{std::size_t{1} << 20, header, rng.below(2) == 1};
      const auto back = reverse_tokens(encode_packets(f.packets, vocab, opt), vocab);
      for (std::size_t p = 0; p < f.packets.size(); ++p) {
        const auto want = packet_bytes(f.packets[p], header);
        if (back.size() != f.packets.size() || !std::equal(want.begin(), want.end(), back[p].begin(), back[p].end())) {
          c.passed = false;
          c.detail = "flow " + std::to_string(i) + " packet " + std::to_string(p);
        }
      }
    }
  }
  if (c.passed) c.detail = std::to_string(flows) + " flows reproduced exactly";
  return c;
}

inline Check mask_count_check(std::uint64_t seed = 7) {
  Check c{"mask counts", true, {}};
  PatchSet p;
  p.patch_size = 4;
  p.patch_dim = 16;
  p.values.assign(100 * 16, 0);
  for (double ratio : {0.0, 0.15, 0.5, 0.9}) {
    const auto expect = static_cast<std::size_t>(std::floor(ratio * 100 + 1e-9));
    const auto m = mask_patches(p, ratio, seed);
    std::set<std::size_t> distinct(m.mask.begin(), m.mask.end());
    if (m.mask.size() != expect || distinct.size() != expect) {
      c.passed = false;
      c.detail += "patches at " + std::to_string(ratio) + "; ";
    }
    TokenSequence s;
    s.ids = {special::cls};
    for (int i = 0; i < 37; ++i) s.ids.push_back(static_cast<TokenId>(kFirstDataId + i));
    s.ids.push_back(special::sep);
    for (auto mode : {MaskMode::token, MaskMode::span}) {
      const auto out = mlm_batch(std::span(&s, 1), ratio, mode, {}, kMinVocabSize, seed);
      const auto want = static_cast<std::size_t>(std::floor(ratio * 37 + 1e-9));
      if (out[0].positions.size() != want) {
        c.passed = false;
        c.detail += "tokens at " + std::to_string(ratio) + "; ";
      }
    }
  }
  if (c.passed) c.detail = "ratios 0, 0.15, 0.5, 0.9 exact";
  return c;
}

inline std::vector<Check> run_all() {
  return {gradient_check(), bpe_check(), metrics_check(), enumeration_check(), checkpoint_check(), tokenization_check(), mask_count_check()};
}

}  // namespace trafficlm::selftest
