#include <gtest/gtest.h>

#include <map>

#include "trafficlm/finetune.hpp"
#include "trafficlm/nn/checkpoint.hpp"
#include "trafficlm/synth.hpp"
#include "util.hpp"

using namespace trafficlm;

namespace {

nn::ModelConfig tiny(nn::ModelMode mode = nn::ModelMode::encoder) {
  nn::ModelConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_layers = 1;
  c.ffn_dim = 32;
  c.max_len = 32;
  c.vocab_size = kMinVocabSize;
  c.dropout = 0.0;
  c.mode = mode;
  c.patch_dim = 64;
  c.head_hidden = {16};
  return c;
}

std::vector<double> backbone_values(const nn::TrafficModel<double>& m) {
  std::vector<double> out;
  for (const auto& e : m.params().entries()) {
    if (e.name.rfind("task.", 0) == 0) continue;
    out.insert(out.end(), e.tensor.data().begin(), e.tensor.data().end());
  }
  return out;
}

}  // namespace

TEST(Heads, SeventeenClassSimplex) {
  nn::TrafficModel<double> m(tiny(), 1);
  attach_classifier(m, 17);
  EXPECT_EQ(m.config().n_classes, 17u);
  const auto flows = synth_flows(preset_spec("mixed", 8), 1);
  FeatureOptions opt;
  opt.patch_size = 8;
  for (const auto& f : flows) {
    const auto p = classify_probabilities(m, f, opt);
    ASSERT_EQ(p.size(), 17u);
    double s = 0;
    for (double v : p) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  nn::TrafficModel<double> dec(tiny(nn::ModelMode::decoder), 1);
  EXPECT_ERROR(WrongMode, attach_classifier(dec, 3));
  EXPECT_ERROR(WrongMode, attach_regressor(dec));
}

TEST(Heads, RegressionTargetIsLogVolume) {
  EXPECT_EQ(volume_to_target(0.0), 0.0);
  EXPECT_NEAR(volume_to_target(std::exp(3.0) - 1.0), 3.0, 1e-12);
  for (double v : {0.0, 1.0, 1500.0, 1e9}) EXPECT_NEAR(target_to_volume(volume_to_target(v)), v, 1e-6 * (1 + v));
}

TEST(Features, InputShapes) {
  const auto flows = synth_flows(preset_spec("mixed", 8), 2);
  FeatureOptions opt;
  opt.patch_size = 4;
  auto in = flow_input(flows[0], opt);
  EXPECT_EQ(in.n_rows, 100u);
  EXPECT_EQ(in.dim, 16u);
  opt.kind = InputKind::metadata;
  opt.max_packets = 2;
  in = flow_input(flows[0], opt);
  EXPECT_EQ(in.dim, kMetadataWidth);
  EXPECT_EQ(in.n_rows, std::min<std::size_t>(2, flows[0].packets.size()));
  EXPECT_EQ(baseline_vector(flows[0], opt).size(), 2 * kMetadataWidth);
  opt.kind = InputKind::tokens;
  EXPECT_ERROR(InvalidArgument, flow_input(flows[0], opt));
  Vocabulary vocab;
  opt.token_packets = 1;
  in = flow_input(flows[0], opt, &vocab);
  EXPECT_EQ(in.seq.ids, encode_packets(std::span(flows[0].packets).first(1), vocab, {opt.max_len, true, false}).ids);
  EXPECT_ERROR(Config, parse_input_kind("pixels"));
}

TEST(Split, StratifiedWithinOnePerClass) {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::int32_t> labels(10 + rng.below(200));
    for (auto& l : labels) l = static_cast<std::int32_t>(rng.below(5));
    const double frac = 0.5 + 0.4 * rng.uniform();
    const auto s = stratified_split(labels, frac, t);
    EXPECT_EQ(s.train.size() + s.validation.size(), labels.size());
    std::map<std::int32_t, std::size_t> all, train;
    for (auto l : labels) ++all[l];
    for (auto i : s.train) ++train[labels[i]];
    for (auto [c, n] : all) EXPECT_LE(std::abs(static_cast<double>(train[c]) - frac * static_cast<double>(n)), 1.0);
    EXPECT_EQ(s, stratified_split(labels, frac, t));
  }
  const std::vector<std::int32_t> l{0, 1};
  EXPECT_ERROR(InvalidArgument, stratified_split(l, 0.0, 1));
}

TEST(Finetune, Preconditions) {
  auto flows = synth_flows(preset_spec("fields", 6), 3);
  FinetuneConfig cfg;
  cfg.epochs = 1;
  nn::TrafficModel<double> bare(tiny(), 1);
  EXPECT_ERROR(WrongMode, finetune(bare, flows, cfg, 1));
  nn::TrafficModel<double> dec(tiny(nn::ModelMode::decoder), 1);
  EXPECT_ERROR(WrongMode, finetune(dec, flows, cfg, 1));
  nn::TrafficModel<double> m(tiny(), 1);
  attach_classifier(m, 2);
  for (auto& f : flows) f.label = 1;
  EXPECT_ERROR(DegenerateLabels, finetune(m, flows, cfg, 1));
  flows[0].label = 5;
  EXPECT_ERROR(LabelOutOfRange, finetune(m, flows, cfg, 1));
  EXPECT_ERROR(EmptyCorpus, finetune(m, std::span<const Flow>{}, cfg, 1));
}

TEST(Finetune, LearnsSeparableClassesAndIsDeterministic) {
  const auto flows = synth_flows(preset_spec("fields", 40), 4);
  FinetuneConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 8;
  cfg.features.patch_size = 8;
  cfg.adam.lr = 3e-3;
  cfg.adam.warmup_steps = 5;
  nn::TrafficModel<double> a(tiny(), 5), b(tiny(), 5);
  attach_classifier(a, 2);
  attach_classifier(b, 2);
  const auto ra = finetune(a, flows, cfg, 7);
  const auto rb = finetune(b, flows, cfg, 7);
  ASSERT_TRUE(ra.validation.classification.has_value());
  EXPECT_EQ(ra.validation.classification->accuracy, 1.0);
  EXPECT_EQ(ra.epochs.size(), 6u);
  EXPECT_GE(ra.best_epoch, 1u);
  EXPECT_EQ(nn::save_checkpoint(ra.checkpoint), nn::save_checkpoint(rb.checkpoint));
  EXPECT_EQ(ra.split, rb.split);
  // the returned model holds the best-epoch parameters
  const auto again = evaluate_flows(a, flows, cfg.features);
  EXPECT_EQ(again.classification->total, flows.size());
}

TEST(Finetune, FrozenBackboneOnlyMovesHead) {
  const auto flows = synth_flows(preset_spec("fields", 10), 5);
  FinetuneConfig cfg;
  cfg.epochs = 2;
  cfg.freeze_backbone = true;
  cfg.features.patch_size = 8;
  nn::TrafficModel<double> m(tiny(), 6);
  attach_classifier(m, 2);
  const auto before = backbone_values(m);
  const auto head = m.params().at("task.classifier.out.weight").data();
  const std::vector<double> head_before(head.begin(), head.end());
  finetune(m, flows, cfg, 1);
  EXPECT_EQ(backbone_values(m), before);
  const auto head_after = m.params().at("task.classifier.out.weight").data();
  EXPECT_FALSE(std::equal(head_before.begin(), head_before.end(), head_after.begin()));
}

TEST(Finetune, RegressionReportsBytes) {
  const auto flows = synth_flows(preset_spec("volume", 20), 6);
  FinetuneConfig cfg;
  cfg.epochs = 2;
  cfg.features.kind = InputKind::metadata;
  auto c = tiny();
  c.patch_dim = kMetadataWidth;
  nn::TrafficModel<double> m(c, 7);
  attach_regressor(m);
  const auto r = finetune(m, flows, cfg, 2);
  ASSERT_TRUE(r.validation.regression.has_value());
  EXPECT_EQ(r.validation.predicted_bytes.size(), r.split.validation.size());
  EXPECT_GT(r.target_std, 0.0);
  const auto base = head_only_baseline(flows, nn::TaskKind::regress, 0, cfg, 2, {8});
  EXPECT_EQ(base.split, r.split);
  EXPECT_TRUE(base.validation.regression.has_value());
}

TEST(FieldRecords, EncodeDecodeRoundTrip) {
  const std::vector<FieldRecord> recs{{64, 1500, 0}, {128, 40, 1}, {1, 0x1234, 1000}};
  const auto ids = encode_field_records(3, recs);
  EXPECT_EQ(ids.size(), 2u + 4 * 3 + 1);
  EXPECT_EQ(ids[0], special::bos);
  EXPECT_EQ(ids[1], special::label(3));
  EXPECT_EQ(ids.back(), special::eos);
  const auto back = decode_field_records(ids);
  ASSERT_TRUE(back.has_value());
  EXPECT_EQ(back->label, 3);
  ASSERT_EQ(back->records.size(), 3u);
  EXPECT_EQ(back->records[0], recs[0]);
  EXPECT_EQ(back->records[1], recs[1]);
  // inter-arrival returns as the lower edge of its bucket
  EXPECT_EQ(back->records[2].ttl, 1);
  EXPECT_EQ(back->records[2].ip_length, 0x1234);
  EXPECT_EQ(back->records[2].inter_arrival_us, 511);
  auto broken = ids;
  broken[3] = special::sep;
  EXPECT_FALSE(decode_field_records(broken).has_value());
  broken = ids;
  broken.pop_back();
  EXPECT_FALSE(decode_field_records(broken).has_value());
  EXPECT_ERROR(LabelOutOfRange, generation_prompt(8));
}

TEST(Generate, PrefixAndStopContract) {
  nn::TrafficModel<double> m(tiny(nn::ModelMode::decoder), 8);
  const std::vector<TokenId> prompt{special::bos, special::label(0)};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto out = generate(m, prompt, 20, 1.0, seed);
    EXPECT_TRUE(std::equal(prompt.begin(), prompt.end(), out.begin()));
    EXPECT_LE(out.size(), 20u);
    const auto eos = std::find(out.begin(), out.end(), special::eos);
    if (eos != out.end()) {
      EXPECT_EQ(eos + 1, out.end());
    } else {
      EXPECT_EQ(out.size(), 20u);
    }
    EXPECT_EQ(out, generate(m, prompt, 20, 1.0, seed));
  }
  EXPECT_ERROR(EmptyPrompt, generate(m, std::vector<TokenId>{}, 5, 1.0, 1));
  EXPECT_TRUE(generate_flows(m, 0, 0, 1.0, 1).samples.empty());
  nn::TrafficModel<double> enc(tiny(), 8);
  EXPECT_ERROR(WrongMode, generate(enc, prompt, 5, 1.0, 1));
}

TEST(Generate, SamplingRules) {
  const std::vector<double> logits{1.0, 3.0, 3.0, -2.0};
  Rng rng(1);
  EXPECT_EQ(sample_token<double>(logits, 0.0, 1.0, rng), 1u);
  for (int i = 0; i < 50; ++i) {
    const auto t = sample_token<double>(logits, 1.0, 0.3, rng);
    EXPECT_TRUE(t == 1u || t == 2u) << t;
  }
  std::map<TokenId, int> seen;
  for (int i = 0; i < 4000; ++i) ++seen[sample_token<double>(logits, 1.0, 1.0, rng)];
  EXPECT_EQ(seen.size(), 4u);
}

TEST(Generate, ConstantFieldCorpusGivesConstantField) {
  const auto flows = synth_flows(preset_spec("fields-constant", 60), 9);
  std::vector<std::vector<TokenId>> seqs;
  for (const auto& f : flows) {
    const auto recs = field_records(f);
    for (const auto& r : recs) ASSERT_EQ(r.ttl, 64);
    seqs.push_back(encode_field_records(0, recs));
  }
  auto c = tiny(nn::ModelMode::decoder);
  nn::TrafficModel<double> m(c, 10);
  nn::AdamConfig ac;
  ac.lr = 3e-3;
  ac.warmup_steps = 10;
  const auto hist = finetune_generator(m, std::span<const std::vector<TokenId>>(seqs), 120, 8, ac, 3);
  EXPECT_LT(hist.back().loss, hist.front().loss);
  const auto g = generate_flows(m, 0, 30, 0.0, 4);
  ASSERT_FALSE(g.samples.empty());
  for (const auto& s : g.samples) {
    for (const auto& r : s.records) EXPECT_EQ(r.ttl, 64);
  }
  const auto csv = field_records_csv(g.samples);
  EXPECT_EQ(csv.rfind("sample,label,packet,ttl,ip_length,inter_arrival_us\n", 0), 0u);
}
