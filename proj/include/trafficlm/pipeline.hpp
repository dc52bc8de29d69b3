#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "trafficlm/bytes.hpp"
#include "trafficlm/config.hpp"
#include "trafficlm/error.hpp"
#include "trafficlm/eval.hpp"
#include "trafficlm/finetune.hpp"
#include "trafficlm/flow.hpp"
#include "trafficlm/mfr.hpp"
#include "trafficlm/nn/checkpoint.hpp"
#include "trafficlm/pcap.hpp"
#include "trafficlm/pretrain.hpp"
#include "trafficlm/synth.hpp"
#include "trafficlm/tokenize.hpp"

namespace trafficlm::pipeline {

/// File-based stage: hashes every input read and output written, and
/// leaves <out_dir>/<name>.manifest with the resolved configuration.
class Stage {
 public:
  Stage(std::string name, const RunConfig& cfg) : name_(std::move(name)), cfg_(cfg) {
    std::filesystem::create_directories(cfg.str("paths.out_dir"));
  }

  /// A path key resolved against paths.out_dir (absolute paths kept).
  std::string path(const std::string& key) const { return resolve(cfg_.str(key)); }
  std::string resolve(const std::string& p) const {
    if (p.empty()) return p;
    std::filesystem::path fp(p);
    return fp.is_absolute() ? p : (std::filesystem::path(cfg_.str("paths.out_dir")) / fp).string();
  }

  Bytes read(const std::string& file) {
    if (!std::filesystem::exists(file)) throw Error(ErrorCode::Io, "missing input " + file);
    Bytes b = read_file(file);
    inputs_.push_back({file, sha256_hex(b)});
    return b;
  }

  void write(const std::string& file, ByteView data) {
    write_file(file, data);
    outputs_.push_back({file, sha256_hex(data)});
  }
  void write(const std::string& file, std::string_view text) {
    write(file, ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  }

  void note(const std::string& line) { notes_.push_back(line); }

  const std::vector<std::string>& notes() const { return notes_; }
  const std::vector<std::pair<std::string, std::string>>& outputs() const { return outputs_; }

  std::string manifest_text() const {
    std::ostringstream out;
    out << "stage = " << name_ << "\n\n[config]\n" << cfg_.resolved() << "\n[inputs]\n";
    for (const auto& [f, h] : inputs_) out << h << "  " << f << '\n';
    out << "\n[outputs]\n";
    for (const auto& [f, h] : outputs_) out << h << "  " << f << '\n';
    out << "\n[notes]\n";
    for (const auto& n : notes_) out << n << '\n';
    return out.str();
  }

  std::string finish() const {
    const std::string file = resolve(name_ + ".manifest");
    write_file(file, manifest_text());
    return file;
  }

 private:
  std::string name_;
  const RunConfig& cfg_;
  std::vector<std::pair<std::string, std::string>> inputs_;
  std::vector<std::pair<std::string, std::string>> outputs_;
  std::vector<std::string> notes_;
};

// ---------------------------------------------------------------------------
// Config translation

inline FlowConfig flow_config(const RunConfig& c) {
  return {c.integer("flow.idle_timeout_us"), c.count("flow.max_packets")};
}

inline nn::AdamConfig adam_config(const RunConfig& c) {
  nn::AdamConfig a;
  a.lr = c.real("adam.lr");
  a.beta1 = c.real("adam.beta1");
  a.beta2 = c.real("adam.beta2");
  a.eps = c.real("adam.eps");
  a.warmup_steps = c.count("adam.warmup_steps");
  a.clip_norm = c.real("adam.clip_norm");
  return a;
}

inline nn::ModelConfig model_config(const RunConfig& c) {
  nn::ModelConfig m;
  m.d_model = c.count("model.d_model");
  m.n_heads = c.count("model.n_heads");
  m.n_layers = c.count("model.n_layers");
  m.ffn_dim = c.count("model.ffn_dim");
  m.max_len = c.count("model.max_len");
  m.dropout = c.real("model.dropout");
  m.mae_decoder_layers = c.count("model.mae_decoder_layers");
  m.vocab_size = 0;
  return m;
}

inline ObjectiveConfig objective_config(const RunConfig& c) {
  ObjectiveConfig o = ObjectiveConfig::for_kind(parse_objective(c.str("pretrain.objective")));
  if (!c.str("pretrain.mask_ratio").empty()) o.mask_ratio = c.real("pretrain.mask_ratio");
  o.span_mean_len = c.real("pretrain.span_mean_len");
  o.batch_size = c.count("pretrain.batch_size");
  o.steps = c.count("pretrain.steps");
  o.checkpoint_every = c.count("pretrain.checkpoint_every");
  o.patch_size = c.count("mfr.patch_size");
  o.include_header = c.flag("tokenize.include_header");
  o.adam = adam_config(c);
  o.validate();
  return o;
}

inline FeatureOptions feature_options(const RunConfig& c) {
  FeatureOptions f;
  f.kind = parse_input_kind(c.str("finetune.input"));
  f.patch_size = c.count("mfr.patch_size");
  f.max_packets = c.count("finetune.max_packets");
  f.token_packets = c.count("finetune.token_packets");
  f.max_len = c.count("model.max_len");
  f.include_header = c.flag("tokenize.include_header");
  return f;
}

inline std::map<std::string, std::string> parse_metadata(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (auto eq = line.find('='); eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

inline std::vector<Flow> load_flows(Stage& st, const std::string& file) {
  try {
    return load_flow_store(st.read(file));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Io) throw;
    throw Error(e.code(), file + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Stages

inline std::string truth_csv(const std::vector<FlowTruth>& truth) {
  std::ostringstream out;
  out << "protocol,addr_a,port_a,addr_b,port_b,start_us,label,volume_bytes\n";
  for (const auto& t : truth) {
    out << int(t.key.protocol) << ',' << t.key.endpoint_a.addr << ',' << t.key.endpoint_a.port << ',' << t.key.endpoint_b.addr << ','
        << t.key.endpoint_b.port << ',' << t.start_us << ',' << t.label << ',' << t.volume_bytes << '\n';
  }
  return out.str();
}

inline std::vector<FlowTruth> parse_truth_csv(const std::string& text) {
  std::vector<FlowTruth> out;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 8) throw Error(ErrorCode::InvalidArgument, "truth line " + std::to_string(line_no) + ": expected 8 fields");
    try {
      FlowTruth t;
      t.key.protocol = static_cast<std::uint8_t>(std::stoul(f[0]));
      t.key.endpoint_a = {static_cast<std::uint32_t>(std::stoul(f[1])), static_cast<std::uint16_t>(std::stoul(f[2]))};
      t.key.endpoint_b = {static_cast<std::uint32_t>(std::stoul(f[3])), static_cast<std::uint16_t>(std::stoul(f[4]))};
      t.start_us = std::stoll(f[5]);
      t.label = static_cast<std::int32_t>(std::stol(f[6]));
      t.volume_bytes = std::stoull(f[7]);
      out.push_back(t);
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::InvalidArgument, "truth line " + std::to_string(line_no) + ": bad number");
    }
  }
  return out;
}

/// preset -> pcap + ground-truth CSV
inline Stage synth(const RunConfig& cfg) {
  Stage st("synth", cfg);
  const SynthSpec spec = preset_spec(cfg.str("synth.preset"), cfg.count("synth.flows"));
  const SyntheticTrace trace = synth_trace(spec, cfg.u64("seed"));
  st.write(st.path("paths.pcap"), write_pcap(trace.packets, cfg.flag("synth.nanosecond")));
  const std::string truth = cfg.str("paths.truth").empty() ? st.resolve("truth.csv") : st.path("paths.truth");
  st.write(truth, truth_csv(trace.flows));
  st.note("packets = " + std::to_string(trace.packets.size()));
  st.note("flows = " + std::to_string(trace.flows.size()));
  return st;
}

/// pcap -> flow store + per-flow summary
inline Stage ingest(const RunConfig& cfg) {
  Stage st("ingest", cfg);
  ParseResult parsed = parse_pcap(st.read(st.path("paths.pcap")));
  auto assembled = assemble_flows(std::move(parsed.packets), flow_config(cfg));
  auto& flows = assembled.flows;
  if (!cfg.str("paths.truth").empty()) {
    const std::string text = [&] {
      Bytes b = st.read(st.path("paths.truth"));
      return std::string(b.begin(), b.end());
    }();
    st.note("labeled = " + std::to_string(label_flows(flows, parse_truth_csv(text))));
  }
  if (const auto& salt = cfg.str("ingest.anonymize_salt"); !salt.empty()) {
    Anonymizer anon(ByteView(reinterpret_cast<const std::uint8_t*>(salt.data()), salt.size()));
    for (auto& f : flows) f = anon.apply(f);
  }
  st.write(st.path("paths.flows"), save_flow_store(flows));
  st.write(st.resolve("flows.csv"), flow_summary_csv(flows));
  const auto& s = parsed.stats;
  st.note("records = " + std::to_string(s.records));
  st.note("packets = " + std::to_string(s.packets));
  st.note("skipped_not_ip = " + std::to_string(s.not_ip));
  st.note("skipped_ipv6 = " + std::to_string(s.ipv6));
  st.note("skipped_transport = " + std::to_string(s.unsupported_transport));
  st.note("malformed = " + std::to_string(s.malformed));
  st.note("flows = " + std::to_string(flows.size()));
  return st;
}

/// Per-packet byte strings that feed BPE training.
inline std::vector<Bytes> bpe_corpus(std::span<const Flow> flows, bool include_header) {
  std::vector<Bytes> corpus;
  for (const auto& f : flows) {
    for (const auto& p : f.packets) {
      ByteView b = packet_bytes(p, include_header);
      if (!b.empty()) corpus.emplace_back(b.begin(), b.end());
    }
  }
  return corpus;
}

/// flow store -> vocabulary, burst token dataset, MFR dataset, label manifest
inline Stage tokenize(const RunConfig& cfg) {
  Stage st("tokenize", cfg);
  const auto flows = load_flows(st, st.path("paths.flows"));
  const bool hdr = cfg.flag("tokenize.include_header");
  BpeStats stats;
  const Vocabulary vocab = train_bpe(bpe_corpus(flows, hdr), cfg.count("tokenize.vocab_size"), &stats);
  st.write(st.path("paths.vocab"), vocab.serialize());

  const EncodeOptions enc{cfg.count("tokenize.max_len"), hdr, cfg.flag("tokenize.time_tokens")};
  std::ostringstream tokens, labels;
  tokens << "flow,burst,truncated,ids\n";
  labels << "flow_index,label,target\n";
  Bytes mfr;
  for (std::size_t i = 0; i < flows.size(); ++i) {
    const auto bursts = segment_bursts(flows[i]);
    for (std::size_t b = 0; b < bursts.size(); ++b) {
      const auto seq = encode_burst(bursts[b], vocab, enc);
      tokens << i << ',' << b << ',' << (seq.truncated ? 1 : 0) << ',';
      for (std::size_t k = 0; k < seq.ids.size(); ++k) tokens << (k ? " " : "") << seq.ids[k];
      tokens << '\n';
    }
    const MfrMatrix m = build_mfr(flows[i]);
    mfr.insert(mfr.end(), m.cells.begin(), m.cells.end());
    labels << i << ',';
    if (flows[i].label) labels << *flows[i].label;
    labels << ',';
    if (flows[i].target) labels << *flows[i].target;
    labels << '\n';
  }
  st.write(st.resolve("tokens.csv"), tokens.str());
  st.write(st.resolve("mfr.bin"), mfr);
  st.write(st.resolve("labels.csv"), labels.str());
  if (!flows.empty()) st.write(st.resolve("mfr_flow0.pgm"), to_pgm(build_mfr(flows.front())));
  st.note("vocab_size = " + std::to_string(vocab.size()));
  st.note("base_bigrams = " + std::to_string(stats.kept_bigrams) + " of " + std::to_string(stats.observed_bigrams));
  st.note("merges = " + std::to_string(stats.merges));
  return st;
}

inline std::optional<Vocabulary> maybe_vocab(Stage& st, bool needed) {
  if (!needed) return std::nullopt;
  const Bytes b = st.read(st.path("paths.vocab"));
  return Vocabulary::parse(std::string_view(reinterpret_cast<const char*>(b.data()), b.size()));
}

/// flow store (+ vocabulary) -> pre-trained checkpoint + loss CSV
inline Stage pretrain(const RunConfig& cfg) {
  Stage st("pretrain", cfg);
  const auto flows = load_flows(st, st.path("paths.flows"));
  const ObjectiveConfig oc = objective_config(cfg);
  const auto vocab = maybe_vocab(st, oc.kind != ObjectiveKind::masked_patch);
  nn::ModelConfig mc = model_config(cfg);
  if (oc.kind == ObjectiveKind::masked_patch) {
    mc.patch_dim = oc.patch_size * oc.patch_size;
    mc.max_len = std::max(mc.max_len, (MfrMatrix::rows / oc.patch_size) * (MfrMatrix::rows / oc.patch_size));
  } else {
    mc.vocab_size = vocab->size();
    mc.mae_decoder_layers = 0;
  }
  if (oc.kind == ObjectiveKind::next_token) mc.mode = nn::ModelMode::decoder;
  const std::uint64_t seed = cfg.u64("seed");
  nn::TrafficModel<double> model(mc, mix_seed(seed, 1));
  auto result = train(model, oc, PretrainCorpus{flows, vocab ? &*vocab : nullptr}, mix_seed(seed, 2));
  st.write(st.path("paths.pretrained"), nn::save_checkpoint(result.checkpoint));
  for (const auto& snap : result.snapshots) {
    st.write(st.resolve("pretrained_step" + std::to_string(snap.step) + ".tfmc"), nn::save_checkpoint(snap));
  }
  st.write(st.resolve("pretrain_loss.csv"), loss_history_csv(result.history));
  std::ostringstream n;
  n.precision(6);
  n << "loss first = " << result.history.front().loss << ", last = " << result.history.back().loss;
  st.note(n.str());
  return st;
}

inline std::string epochs_csv(std::span<const EpochMetrics> epochs) {
  std::ostringstream out;
  out.precision(10);
  out << "epoch,train_loss,validation_loss,validation_score\n";
  for (const auto& e : epochs) out << e.epoch << ',' << e.train_loss << ',' << e.validation_loss << ',' << e.validation_score << '\n';
  return out.str();
}

inline std::string report_csv(const TaskMetrics& m, std::size_t n_classes) {
  if (m.classification) {
    std::vector<std::string> names;
    for (std::size_t c = 0; c < n_classes; ++c) names.push_back(std::to_string(c));
    return classification_csv(*m.classification, names);
  }
  if (m.regression) return regression_csv(*m.regression);
  return "";
}

/// flow store (+ pre-trained checkpoint) -> fine-tuned checkpoint, epoch
/// metrics, held-out reports for the model and the head-only baseline
inline Stage finetune_stage(const RunConfig& cfg) {
  Stage st("finetune", cfg);
  const auto flows = load_flows(st, st.path("paths.flows"));
  const std::string task = cfg.str("finetune.task");
  const std::uint64_t seed = cfg.u64("seed");
  const std::string pre = st.path("paths.pretrained");
  const bool from_pre = cfg.flag("finetune.from_pretrained") && std::filesystem::exists(pre);

  if (task == "generate") {
    std::vector<std::vector<TokenId>> seqs;
    const std::size_t max_records = cfg.count("generate.max_records");
    for (const auto& f : flows) {
      const std::int32_t label = f.label.value_or(0);
      if (label < 0 || label >= static_cast<std::int32_t>(special::label_count) || f.packets.empty()) continue;
      const auto rec = field_records(f, max_records);
      seqs.push_back(encode_field_records(label, rec));
    }
    nn::ModelConfig mc = model_config(cfg);
    mc.mode = nn::ModelMode::decoder;
    mc.vocab_size = kMinVocabSize;
    mc.mae_decoder_layers = 0;
    mc.max_len = std::min<std::size_t>(mc.max_len, 3 + 4 * max_records);
    std::optional<nn::TrafficModel<double>> model;
    if (from_pre) {
      auto ck = nn::load_checkpoint<double>(st.read(pre));
      if (ck.config.mode == nn::ModelMode::decoder) {
        model.emplace(nn::model_from_checkpoint(ck));
        st.note("initialized_from = " + pre);
      } else {
        st.note("initialized_from = scratch (" + pre + " is an encoder)");
      }
    }
    if (!model) model.emplace(mc, mix_seed(seed, 1));
    auto history = finetune_generator(*model, std::span<const std::vector<TokenId>>(seqs), cfg.count("finetune.generator_steps"),
                                      cfg.count("finetune.batch_size"), adam_config(cfg), mix_seed(seed, 3));
    auto ck = nn::capture(*model, history.size(), static_cast<const nn::Adam<double>*>(nullptr), nullptr,
                          "task=generate\nmax_records=" + std::to_string(max_records));
    st.write(st.path("paths.finetuned"), nn::save_checkpoint(ck));
    st.write(st.resolve("finetune_loss.csv"), loss_history_csv(history));
    st.note("sequences = " + std::to_string(seqs.size()));
    return st;
  }

  const bool classify = task == "classify";
  if (!classify && task != "regress") throw Error(ErrorCode::Config, "finetune.task must be classify, regress or generate");
  const FeatureOptions feat = feature_options(cfg);
  const bool tokens = feat.kind == InputKind::tokens;
  const auto vocab = maybe_vocab(st, tokens);
  std::size_t n_classes = cfg.count("finetune.n_classes");
  if (classify && n_classes == 0) {
    for (const auto& f : flows) {
      if (f.label) n_classes = std::max<std::size_t>(n_classes, static_cast<std::size_t>(std::max(0, *f.label)) + 1);
    }
  }

  std::optional<nn::TrafficModel<double>> model;
  if (from_pre) {
    auto ck = nn::load_checkpoint<double>(st.read(pre));
    ck.config.task = nn::TaskKind::none;
    std::erase_if(ck.params, [](const auto& p) { return p.name.starts_with("task."); });
    model.emplace(nn::model_from_checkpoint(ck));
  } else {
    nn::ModelConfig mc = model_config(cfg);
    mc.mae_decoder_layers = 0;
    if (tokens) {
      mc.vocab_size = vocab->size();
    } else {
      mc.patch_dim = feat.kind == InputKind::patches ? feat.patch_size * feat.patch_size : kMetadataWidth;
      if (feat.kind == InputKind::patches) mc.max_len = std::max(mc.max_len, (40 / feat.patch_size) * (40 / feat.patch_size));
      mc.max_len = std::max(mc.max_len, feat.max_packets);
    }
    model.emplace(mc, mix_seed(seed, 1));
  }
  const auto& mc = model->config();
  if (tokens ? mc.vocab_size == 0 : mc.patch_dim != (feat.kind == InputKind::patches ? feat.patch_size * feat.patch_size : kMetadataWidth)) {
    throw Error(ErrorCode::Config, "finetune.input does not match the pre-trained model's input");
  }
  if (classify) {
    attach_classifier(*model, n_classes);
  } else {
    attach_regressor(*model);
  }
  FinetuneConfig fc;
  fc.epochs = cfg.count("finetune.epochs");
  fc.batch_size = cfg.count("finetune.batch_size");
  fc.adam = adam_config(cfg);
  fc.train_fraction = cfg.real("finetune.train_fraction");
  fc.freeze_backbone = cfg.flag("finetune.freeze_backbone");
  fc.features = feat;
  auto res = finetune(*model, flows, fc, mix_seed(seed, 3), vocab ? &*vocab : nullptr);
  st.write(st.path("paths.finetuned"), nn::save_checkpoint(res.checkpoint));
  st.write(st.resolve("finetune_epochs.csv"), epochs_csv(res.epochs));
  st.write(st.resolve("finetune_report.csv"), report_csv(res.validation, n_classes));
  st.note("best_epoch = " + std::to_string(res.best_epoch));
  st.note("initialized_from = " + std::string(from_pre ? pre : "scratch"));
  if (cfg.flag("finetune.baseline")) {
    auto base = head_only_baseline<double>(flows, classify ? nn::TaskKind::classify : nn::TaskKind::regress, n_classes, fc, mix_seed(seed, 3));
    st.write(st.resolve("baseline_epochs.csv"), epochs_csv(base.epochs));
    st.write(st.resolve("baseline_report.csv"), report_csv(base.validation, n_classes));
  }
  return st;
}

/// fine-tuned checkpoint + labeled flows -> report CSV + CDF plot
inline Stage evaluate(const RunConfig& cfg) {
  Stage st("evaluate", cfg);
  const auto flows = load_flows(st, st.path("paths.flows"));
  const auto ck = nn::load_checkpoint<double>(st.read(st.path("paths.finetuned")));
  const auto meta = parse_metadata(ck.metadata);
  if (ck.config.task == nn::TaskKind::none) throw Error(ErrorCode::WrongMode, "checkpoint has no classifier or regressor");
  FeatureOptions feat = feature_options(cfg);
  if (auto it = meta.find("input"); it != meta.end()) feat.kind = parse_input_kind(it->second);
  if (auto it = meta.find("patch_size"); it != meta.end()) feat.patch_size = std::stoul(it->second);
  if (auto it = meta.find("max_packets"); it != meta.end()) feat.max_packets = std::stoul(it->second);
  const auto vocab = maybe_vocab(st, feat.kind == InputKind::tokens);
  const auto model = nn::model_from_checkpoint(ck);
  const double mean = meta.count("target_mean") ? std::stod(meta.at("target_mean")) : 0.0;
  const double sd = meta.count("target_std") ? std::stod(meta.at("target_std")) : 1.0;
  std::vector<Flow> labeled;
  for (const auto& f : flows) {
    if (ck.config.task == nn::TaskKind::classify ? f.label.has_value() : f.target.has_value()) labeled.push_back(f);
  }
  if (labeled.empty()) throw Error(ErrorCode::EmptyCorpus, "no labeled flow to evaluate");
  const TaskMetrics m = evaluate_flows(model, std::span<const Flow>(labeled), feat, mean, sd, vocab ? &*vocab : nullptr);
  st.write(st.resolve("evaluation_report.csv"), report_csv(m, ck.config.n_classes));
  std::vector<double> real, predicted;
  std::string axis;
  if (m.classification) {
    for (const auto& f : labeled) real.push_back(*f.label);
    for (auto p : m.predicted_labels) predicted.push_back(p);
    axis = "class label";
    st.note("accuracy = " + std::to_string(m.classification->accuracy));
    st.note("macro_f1 = " + std::to_string(m.classification->macro_f1));
  } else {
    for (const auto& f : labeled) real.push_back(*f.target);
    predicted = m.predicted_bytes;
    axis = "flow volume (bytes)";
    if (m.regression) st.note("r2 = " + std::to_string(m.regression->r2));
  }
  st.write(st.resolve("evaluation_cdf.svg"), cdf_plot(real, predicted, axis));
  return st;
}

/// decoder checkpoint + class prompt -> field-record CSV, CDF plots and KS
/// against the real flows of that class
inline Stage generate_stage(const RunConfig& cfg) {
  Stage st("generate", cfg);
  const auto ck = nn::load_checkpoint<double>(st.read(st.path("paths.finetuned")));
  const auto model = nn::model_from_checkpoint(ck);
  const auto label = static_cast<std::int32_t>(cfg.integer("generate.label"));
  const std::size_t max_records = cfg.count("generate.max_records");
  const auto g = generate_flows(model, label, cfg.count("generate.n"), cfg.real("generate.temperature"), mix_seed(cfg.u64("seed"), 4),
                                cfg.real("generate.top_p"), max_records);
  st.write(st.resolve("generated.csv"), field_records_csv(g.samples));
  st.note("samples = " + std::to_string(g.samples.size()));
  st.note("dropped = " + std::to_string(g.dropped));

  const std::string flows_file = st.path("paths.flows");
  if (!std::filesystem::exists(flows_file) || g.samples.empty()) return st;
  std::vector<double> ttl_real, len_real, ttl_gen, len_gen;
  for (const auto& f : load_flows(st, flows_file)) {
    if (f.label.value_or(0) != label || f.packets.empty()) continue;
    for (const auto& r : field_records(f, max_records)) {
      ttl_real.push_back(r.ttl);
      len_real.push_back(r.ip_length);
    }
  }
  for (const auto& s : g.samples) {
    for (const auto& r : s.records) {
      ttl_gen.push_back(r.ttl);
      len_gen.push_back(r.ip_length);
    }
  }
  if (ttl_real.empty()) return st;
  const double ks_ttl = ks_statistic(ttl_real, ttl_gen);
  const double ks_len = ks_statistic(len_real, len_gen);
  std::ostringstream rep;
  rep << "field,ks,real_n,generated_n\nttl," << ks_ttl << ',' << ttl_real.size() << ',' << ttl_gen.size() << "\nip_length," << ks_len
      << ',' << len_real.size() << ',' << len_gen.size() << '\n';
  st.write(st.resolve("generation_report.csv"), rep.str());
  st.write(st.resolve("ttl_cdf.svg"), cdf_plot(ttl_real, ttl_gen, "TTL"));
  st.write(st.resolve("length_cdf.svg"), cdf_plot(len_real, len_gen, "IP packet length (bytes)"));
  st.note("ks_ttl = " + std::to_string(ks_ttl));
  st.note("ks_ip_length = " + std::to_string(ks_len));
  return st;
}

}  // namespace trafficlm::pipeline
