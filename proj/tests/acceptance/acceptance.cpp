// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when any
// criterion fails. Pass criterion numbers as arguments to run a subset.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "trafficlm/eval.hpp"
#include "trafficlm/finetune.hpp"
#include "trafficlm/nn/checkpoint.hpp"
#include "trafficlm/pcap.hpp"
#include "trafficlm/pretrain.hpp"
#include "trafficlm/selftest.hpp"
#include "trafficlm/synth.hpp"
#include "trafficlm/testing/fuzz.hpp"
#include "trafficlm/testing/structural.hpp"

using namespace trafficlm;
namespace st = trafficlm::selftest;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

nn::ModelConfig encoder(std::size_t d, std::size_t layers) {
  nn::ModelConfig c;
  c.d_model = d;
  c.n_heads = 4;
  c.n_layers = layers;
  c.ffn_dim = 2 * d;
  return c;
}

// ---------------------------------------------------------------------------

Outcome gradients() {
  const auto t0 = Clock::now();
  const auto c = st::gradient_check(1);
  const double t = seconds_since(t0);
  return {c.passed && t < 60.0, c.detail + ", " + num(t, 3) + "s of 60s"};
}

Outcome structure() {
  auto cfg = encoder(32, 2);
  cfg.vocab_size = kMinVocabSize;
  cfg.max_len = 64;
  cfg.dropout = 0.0;
  nn::TrafficModel<double> enc(cfg, 3);
  cfg.mode = nn::ModelMode::decoder;
  nn::TrafficModel<double> dec(cfg, 4);
  Rng rng(9);
  const double rows = std::max(testing::attention_row_error(enc, rng, 50), testing::attention_row_error(dec, rng, 50));
  const double causal = testing::causal_violation(dec, rng, 100);
  const double perm = testing::permutation_violation(enc, rng, 50);
  const double pad = testing::pad_violation(enc, rng, 50);
  return {rows <= 1e-9 && causal == 0.0 && perm < 1e-9 && pad < 1e-9,
          "row-sum error " + num(rows, 3) + ", future-token effect " + num(causal, 3) + " over 100 inputs, permutation error " +
              num(perm, 3) + ", pad leak " + num(pad, 3)};
}

Outcome tokenization() {
  const auto c = st::tokenization_check(1000, 31);
  return {c.passed, c.detail};
}

Outcome bpe() {
  const auto c = st::bpe_check(50, 41);
  if (!c.passed) return {false, c.detail};
  // hand-built corpora where several pairs share the top count
  const std::vector<std::vector<std::vector<std::string>>> ties{
      {{"00", "11", "00", "11"}, {"22", "33", "22", "33"}},
      {{"aa", "bb"}, {"bb", "aa"}, {"aa", "bb"}, {"bb", "aa"}},
      {{"01", "01", "01", "01"}, {"10", "10", "10", "10"}},
      {{"ff", "0f", "ff", "0f", "ff"}, {"0f", "ff", "0f", "ff", "0f"}},
      {{"12", "34", "56", "12", "34", "56", "12", "34", "56"}},
  };
  for (std::size_t i = 0; i < ties.size(); ++i) {
    for (std::size_t size : {kMinVocabSize, kMinVocabSize + 4, kMinVocabSize + 12}) {
      if (auto d = st::bpe_disagreement(ties[i], size); !d.empty()) return {false, "tie corpus " + std::to_string(i) + ": " + d};
    }
  }
  return {true, c.detail + ", plus " + std::to_string(ties.size()) + " tie corpora at 3 sizes"};
}

Outcome masking() {
  const auto c = st::mask_count_check(51);
  if (!c.passed) return {false, c.detail};
  const auto flows = synth_flows(preset_spec("mixed", 16), 52);
  std::set<std::size_t> counts;
  for (const auto& ex : mae_batch(std::span(flows), 0.9, 4, 53)) counts.insert(ex.mask_index.size() * 1000 + ex.total);
  const bool ok = counts == std::set<std::size_t>{90 * 1000 + 100};
  return {ok, c.detail + (ok ? "; 90 of 100 MFR patches masked on every flow" : "; MFR mask count wrong")};
}

Outcome pretraining() {
  const auto t0 = Clock::now();
  const auto flows = synth_flows(preset_spec("mixed", 64), 7);
  auto cfg = encoder(64, 2);
  cfg.patch_dim = 16;
  cfg.max_len = 100;
  cfg.dropout = 0.0;
  auto oc = ObjectiveConfig::for_kind(ObjectiveKind::masked_patch);
  oc.steps = 200;
  oc.batch_size = 16;
  oc.patch_size = 4;
  oc.adam.warmup_steps = 20;
  double before = 0, after = 0;
  std::string hashes[2];
  for (int run = 0; run < 2; ++run) {
    nn::TrafficModel<double> m(cfg, 1);
    before = evaluate_masked_patch(m, flows, 0.9, 4, 99);
    const auto r = train(m, oc, PretrainCorpus{flows, nullptr}, 5);
    after = evaluate_masked_patch(m, flows, 0.9, 4, 99);
    hashes[run] = sha256_hex(nn::save_checkpoint(r.checkpoint));
  }
  const double t = seconds_since(t0);
  const double reduction = 1.0 - after / before;
  return {reduction >= 0.5 && hashes[0] == hashes[1] && t < 300.0,
          "masked-patch MSE " + num(before) + " -> " + num(after) + " (" + num(100 * reduction, 3) + "% lower) in 200 steps, " +
              (hashes[0] == hashes[1] ? "identical" : "different") + " checkpoints over 2 runs, " + num(t, 3) + "s of 300s"};
}

Outcome classification() {
  const auto t0 = Clock::now();
  const auto flows = synth_flows(preset_spec("classes4", 1000), 11);
  auto cfg = encoder(32, 2);
  cfg.patch_dim = 64;
  cfg.max_len = 25;
  nn::TrafficModel<double> m(cfg, 1);
  auto oc = ObjectiveConfig::for_kind(ObjectiveKind::masked_patch);
  oc.steps = 1000;
  oc.batch_size = 16;
  oc.patch_size = 8;
  oc.adam.warmup_steps = 20;
  train(m, oc, PretrainCorpus{flows, nullptr}, 5);
  attach_classifier(m, 4);
  FinetuneConfig fc;
  fc.epochs = 40;
  fc.features.patch_size = 8;
  fc.adam.warmup_steps = 20;
  const auto tuned = finetune(m, std::span<const Flow>(flows), fc, 3);
  const auto base = head_only_baseline<double>(std::span<const Flow>(flows), nn::TaskKind::classify, 4, fc, 3);
  const double f1 = tuned.validation.classification->macro_f1;
  const double b = base.validation.classification->macro_f1;
  const double t = seconds_since(t0);
  return {f1 - b >= 0.05 && t < 900.0, "macro-F1 pre-trained " + num(f1) + " vs head-only " + num(b) + " (gap " + num(f1 - b) +
                                           ") on " + std::to_string(tuned.split.validation.size()) + " held-out flows, " +
                                           num(t, 3) + "s of 900s"};
}

Outcome regression() {
  const auto flows = synth_flows(preset_spec("volume", 600), 13);
  auto cfg = encoder(32, 2);
  cfg.patch_dim = kMetadataWidth;
  cfg.max_len = 32;
  nn::TrafficModel<double> m(cfg, 1);
  attach_regressor(m);
  FinetuneConfig fc;
  fc.epochs = 20;
  fc.features.kind = InputKind::metadata;
  fc.adam.warmup_steps = 20;
  const auto tuned = finetune(m, std::span<const Flow>(flows), fc, 3);
  const auto base = head_only_baseline<double>(std::span<const Flow>(flows), nn::TaskKind::regress, 0, fc, 3);
  const auto& r = *tuned.validation.regression;
  const auto& rb = *base.validation.regression;
  return {r.r2 >= 0.9, "held-out R^2 " + num(r.r2) + " (MAE " + num(r.mae) + " bytes, MAPE " + num(r.mape) + "%); head-only R^2 " +
                           num(rb.r2) + " (MAE " + num(rb.mae) + " bytes)"};
}

struct FieldSamples {
  std::vector<double> ttl, length;
};

FieldSamples real_fields(std::span<const Flow> flows, std::int32_t label) {
  FieldSamples s;
  for (const auto& f : flows) {
    if (f.label != label) continue;
    for (const auto& r : field_records(f)) {
      s.ttl.push_back(r.ttl);
      s.length.push_back(r.ip_length);
    }
  }
  return s;
}

// Generates until `n` samples decode; returns the fields and the number of
// undecodable outputs.
std::pair<FieldSamples, std::size_t> generated_fields(const nn::TrafficModel<double>& m, std::size_t n, double top_p) {
  FieldSamples s;
  std::size_t decoded = 0, dropped = 0;
  for (std::uint64_t round = 0; decoded < n && round < 10; ++round) {
    const auto g = generate_flows(m, 0, n - decoded, 1.0, mix_seed(9, round), top_p);
    dropped += g.dropped;
    for (const auto& smp : g.samples) {
      ++decoded;
      for (const auto& r : smp.records) {
        s.ttl.push_back(r.ttl);
        s.length.push_back(r.ip_length);
      }
    }
  }
  return {s, dropped};
}

Outcome generation() {
  constexpr double kTopP = 0.95;
  auto cfg = encoder(32, 2);
  cfg.mode = nn::ModelMode::decoder;
  cfg.vocab_size = kMinVocabSize;
  cfg.max_len = 16;
  nn::AdamConfig ac;
  ac.warmup_steps = 20;
  auto fit = [&](const std::string& preset, std::size_t steps) {
    const auto flows = synth_flows(preset_spec(preset, 600), 17);
    std::vector<std::vector<TokenId>> seqs;
    for (const auto& f : flows) seqs.push_back(encode_field_records(*f.label, field_records(f)));
    nn::TrafficModel<double> m(cfg, 1);
    finetune_generator(m, std::span<const std::vector<TokenId>>(seqs), steps, 16, ac, 5);
    return std::make_pair(real_fields(flows, 0), std::move(m));
  };
  const auto [real, model] = fit("fields", 1500);
  const auto [gen, dropped] = generated_fields(model, 1000, kTopP);
  const double ks_ttl = ks_statistic(real.ttl, gen.ttl), ks_len = ks_statistic(real.length, gen.length);
  const auto [creal, cmodel] = fit("fields-constant", 300);
  const auto [cgen, cdropped] = generated_fields(cmodel, 1000, kTopP);
  const double ks_const = ks_statistic(creal.ttl, cgen.ttl);
  return {ks_ttl <= 0.15 && ks_len <= 0.15 && ks_const == 0.0,
          "KS ttl " + num(ks_ttl) + ", length " + num(ks_len) + " on 1000 samples (" + std::to_string(dropped) +
              " undecodable redrawn); constant-TTL control KS " + num(ks_const)};
}

Vocabulary vocab_for(std::span<const Flow> flows, std::size_t size) {
  std::vector<Bytes> corpus;
  for (const auto& f : flows) {
    for (const auto& p : f.packets) {
      const auto b = packet_bytes(p, true);
      corpus.emplace_back(b.begin(), b.end());
    }
  }
  return train_bpe(corpus, size);
}

Outcome auxiliary() {
  const auto t0 = Clock::now();
  // same-origin: payload bytes only, pairs of burst halves
  const auto origin_train = synth_flows(preset_spec("origin", 200), 21);
  const auto origin_test = synth_flows(preset_spec("origin", 200), 22);
  const auto ov = vocab_for(origin_train, 400);
  auto oc_cfg = encoder(32, 2);
  oc_cfg.vocab_size = ov.size();
  oc_cfg.max_len = 128;
  nn::TrafficModel<double> om(oc_cfg, 1);
  auto oc = ObjectiveConfig::for_kind(ObjectiveKind::same_origin);
  oc.steps = 1500;
  oc.batch_size = 16;
  oc.adam.warmup_steps = 20;
  oc.include_header = false;
  train(om, oc, PretrainCorpus{origin_train, &ov}, 5);
  const auto pairs = same_origin_batch(std::span(origin_test), ov, 400, 77, {128, false, false});
  std::vector<std::int32_t> labels;
  for (const auto& p : pairs) labels.push_back(p.label);
  const double auc = roc_auc(same_origin_scores(om, pairs), labels);

  const auto order_train = synth_flows(preset_spec("handshake", 200), 21);
  const auto order_test = synth_flows(preset_spec("handshake", 200), 22);
  const auto hv = vocab_for(order_train, 400);
  auto pc = encoder(32, 2);
  pc.vocab_size = hv.size();
  pc.max_len = 80;
  nn::TrafficModel<double> pm(pc, 1);
  auto po = ObjectiveConfig::for_kind(ObjectiveKind::packet_order);
  po.steps = 1000;
  po.batch_size = 16;
  po.adam.lr = 2e-3;
  po.adam.warmup_steps = 20;
  train(pm, po, PretrainCorpus{order_train, &hv}, 5);
  const auto batch = packet_order_batch(std::span(order_test), hv, 77, {80, true, false});
  const auto pred = predict_packet_order(pm, batch.items);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == batch.items[i].label;
  const double acc = static_cast<double>(hit) / static_cast<double>(pred.size());
  return {auc >= 0.9 && acc >= 0.8, "same-origin AUC " + num(auc) + " on " + std::to_string(pairs.size()) +
                                        " held-out pairs; packet-order accuracy " + num(acc) + " on " +
                                        std::to_string(pred.size()) + " held-out flows (chance 0.1667); " +
                                        num(seconds_since(t0), 3) + "s"};
}

Outcome determinism_and_formats() {
  std::vector<std::string> problems;
  // identical seeds, identical checkpoints
  const auto flows = synth_flows(preset_spec("mixed", 16), 61);
  const auto vocab = vocab_for(flows, 400);
  auto cfg = encoder(16, 1);
  cfg.n_heads = 2;
  cfg.vocab_size = vocab.size();
  cfg.max_len = 64;
  auto oc = ObjectiveConfig::for_kind(ObjectiveKind::masked_token);
  oc.steps = 10;
  oc.batch_size = 4;
  std::string hash[3];
  Bytes first;
  for (int run = 0; run < 3; ++run) {
    nn::TrafficModel<double> m(cfg, run == 2 ? 8 : 7);
    const auto bytes = nn::save_checkpoint(train(m, oc, PretrainCorpus{flows, &vocab}, 62).checkpoint);
    hash[run] = sha256_hex(bytes);
    if (run == 0) first = bytes;
  }
  if (hash[0] != hash[1]) problems.push_back("same seed gave different checkpoints");
  if (hash[0] == hash[2]) problems.push_back("different seeds gave the same checkpoint");
  if (nn::save_checkpoint(nn::load_checkpoint<double>(first)) != first) problems.push_back("checkpoint does not round-trip");
  const auto vbytes = vocab.serialize();
  const auto vback = Vocabulary::parse(vbytes);
  if (!(vback == vocab) || vback.serialize() != vbytes) problems.push_back("vocabulary does not round-trip");

  // pcap fuzz: truncations and bit flips of valid captures
  Rng rng(63);
  std::vector<Bytes> seeds;
  for (bool nano : {false, true}) {
    std::vector<Packet> pk;
    for (const auto& f : synth_flows(preset_spec("mixed", 8), nano ? 64 : 65)) pk.insert(pk.end(), f.packets.begin(), f.packets.end());
    seeds.push_back(write_pcap(pk, nano));
  }
  std::size_t parsed = 0, rejected = 0, undefined = 0;
  for (int i = 0; i < 10000; ++i) {
    Bytes b = seeds[rng.below(seeds.size())];
    if (rng.below(2) == 0) {
      b.resize(rng.below(b.size() + 1));
    }
    const std::size_t flips = rng.below(9);
    for (std::size_t k = 0; k < flips && !b.empty(); ++k) b[rng.below(b.size())] ^= static_cast<std::uint8_t>(1u << rng.below(8));
    try {
      parse_pcap(b);
      ++parsed;
    } catch (const Error&) {
      ++rejected;
    } catch (...) {
      ++undefined;
    }
  }
  if (undefined) problems.push_back(std::to_string(undefined) + " fuzz cases raised an undefined error");
  std::string detail = problems.empty() ? "checkpoint sha256 " + hash[0].substr(0, 12) + " reproduced; checkpoint (" +
                                              std::to_string(first.size()) + " B) and vocabulary (" + std::to_string(vbytes.size()) +
                                              " B) round-trip; pcap fuzz 10000 cases: " + std::to_string(parsed) + " parsed, " +
                                              std::to_string(rejected) + " rejected with defined errors"
                                        : "";
  for (const auto& p : problems) detail += p + "; ";
  return {problems.empty(), detail};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "gradient fidelity", gradients},
      {2, "structural contracts", structure},
      {3, "tokenization round trip", tokenization},
      {4, "BPE oracle equivalence", bpe},
      {5, "masking exactness", masking},
      {6, "pre-training learns", pretraining},
      {7, "classification gap over head-only baseline", classification},
      {8, "regression on metadata", regression},
      {9, "generation fidelity", generation},
      {10, "auxiliary objectives", auxiliary},
      {11, "determinism and formats", determinism_and_formats},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %2d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
