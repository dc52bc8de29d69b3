#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "trafficlm/error.hpp"
#include "trafficlm/eval.hpp"
#include "trafficlm/flow.hpp"
#include "trafficlm/mfr.hpp"
#include "trafficlm/nn/checkpoint.hpp"
#include "trafficlm/nn/model.hpp"
#include "trafficlm/nn/optim.hpp"
#include "trafficlm/pretrain.hpp"
#include "trafficlm/rng.hpp"
#include "trafficlm/tokenize.hpp"

namespace trafficlm {

// ---------------------------------------------------------------------------
// Heads

/// Widths of the three hidden layers of both task heads.
inline const std::vector<std::size_t> kHeadHidden{256, 128, 64};

template <typename T>
void attach_classifier(nn::TrafficModel<T>& model, std::size_t n_classes) {
  if (model.config().mode != nn::ModelMode::encoder) throw Error(ErrorCode::WrongMode, "classifier needs an encoder backbone");
  model.attach_task(nn::TaskKind::classify, n_classes);
}

template <typename T>
void attach_regressor(nn::TrafficModel<T>& model) {
  if (model.config().mode != nn::ModelMode::encoder) throw Error(ErrorCode::WrongMode, "regressor needs an encoder backbone");
  model.attach_task(nn::TaskKind::regress);
}

inline double volume_to_target(double bytes) { return std::log1p(bytes); }
inline double target_to_volume(double target) { return std::expm1(target); }

// ---------------------------------------------------------------------------
// Flow features

enum class InputKind { patches, tokens, metadata };

inline std::string to_string(InputKind k) {
  return k == InputKind::patches ? "patches" : k == InputKind::tokens ? "tokens" : "metadata";
}

inline InputKind parse_input_kind(const std::string& s) {
  for (auto k : {InputKind::patches, InputKind::tokens, InputKind::metadata}) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorCode::Config, "unknown input kind '" + s + "'");
}

inline constexpr std::size_t kMetadataWidth = 3;

struct FeatureOptions {
  InputKind kind = InputKind::patches;
  std::size_t patch_size = 4;
  std::size_t max_packets = 32;    // metadata rows; also the baseline vector length
  std::size_t token_packets = 5;   // packets encoded for token input
  std::size_t max_len = 512;
  bool include_header = true;
};

/// Per packet: size / 1500, log1p(inter-arrival us) / 16, direction.
inline std::vector<double> metadata_rows(const Flow& f, std::size_t max_packets) {
  const FlowMetadata m = extract_metadata(f);
  std::vector<double> out;
  for (std::size_t i = 0; i < std::min(max_packets, m.packets.size()); ++i) {
    out.push_back(m.packets[i].size_bytes / 1500.0);
    out.push_back(std::log1p(static_cast<double>(m.packets[i].inter_arrival_us)) / 16.0);
    out.push_back(m.packets[i].direction == Direction::forward ? 0.0 : 1.0);
  }
  return out;
}

/// Backbone input of one flow: continuous rows or a token sequence.
struct FlowInput {
  std::vector<double> rows;
  std::size_t n_rows = 0;
  std::size_t dim = 0;
  TokenSequence seq;
};

inline FlowInput flow_input(const Flow& f, const FeatureOptions& opt, const Vocabulary* vocab = nullptr) {
  FlowInput in;
  switch (opt.kind) {
    case InputKind::patches: {
      const PatchSet p = patchify(build_mfr(f), opt.patch_size);
      in.dim = p.patch_dim;
      in.n_rows = p.count();
      for (auto b : p.values) in.rows.push_back(b / 255.0);
      break;
    }
    case InputKind::metadata:
      in.rows = metadata_rows(f, opt.max_packets);
      in.dim = kMetadataWidth;
      in.n_rows = in.rows.size() / kMetadataWidth;
      break;
    case InputKind::tokens: {
      if (!vocab) throw Error(ErrorCode::InvalidArgument, "token input needs a vocabulary");
      if (f.packets.empty()) throw Error(ErrorCode::EmptyFlow, "empty flow");
      const std::size_t n = std::min(opt.token_packets, f.packets.size());
      in.seq = encode_packets(std::span(f.packets).first(n), *vocab, {opt.max_len, opt.include_header, false});
      break;
    }
  }
  return in;
}

/// Flat raw vector for the head-only baseline: image bytes / 255 for
/// patches and tokens, zero-padded metadata rows for metadata.
inline std::vector<double> baseline_vector(const Flow& f, const FeatureOptions& opt) {
  if (opt.kind == InputKind::metadata) {
    auto v = metadata_rows(f, opt.max_packets);
    v.resize(opt.max_packets * kMetadataWidth, 0.0);
    return v;
  }
  const MfrMatrix m = build_mfr(f);
  std::vector<double> v;
  v.reserve(m.cells.size());
  for (auto b : m.cells) v.push_back(b / 255.0);
  return v;
}

template <typename T>
nn::Tensor<T> task_forward(const nn::TrafficModel<T>& model, const FlowInput& in, const nn::ForwardOptions& opt = {}) {
  if (!in.seq.ids.empty()) return model.task_output(model.pool(model.encode_tokens(in.seq.ids, in.seq.segments, opt), true));
  auto x = nn::Tensor<T>::constant(in.n_rows, in.dim, std::vector<T>(in.rows.begin(), in.rows.end()));
  return model.task_output(model.pool(model.encode_features(x, {}, opt), false));
}

// ---------------------------------------------------------------------------
// Splits

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  bool operator==(const Split&) const = default;
};

/// Per class, round(fraction * count) shuffled members go to train.
inline Split stratified_split(std::span<const std::int32_t> labels, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw Error(ErrorCode::InvalidArgument, "train fraction outside (0,1]");
  std::map<std::int32_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  Rng rng(seed);
  Split s;
  for (auto& [cls, idx] : by_class) {
    rng.shuffle(idx.begin(), idx.end());
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
    s.train.insert(s.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.validation.insert(s.validation.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.validation.begin(), s.validation.end());
  return s;
}

inline Split random_split(std::size_t n, double train_fraction, std::uint64_t seed) {
  std::vector<std::int32_t> same(n, 0);
  return stratified_split(same, train_fraction, seed);
}

// ---------------------------------------------------------------------------
// Supervised fitting

struct FinetuneConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  nn::AdamConfig adam;
  double train_fraction = 0.8;
  bool freeze_backbone = false;
  FeatureOptions features;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double validation_score = 0.0;  // macro-F1 (classification) or R^2 on log volume
};

/// Held-out metrics of a fitted model (either arm).
struct TaskMetrics {
  std::optional<ClassificationReport> classification;
  std::optional<RegressionReport> regression;  // in bytes
  std::vector<std::size_t> indices;            // flows evaluated
  std::vector<std::int32_t> predicted_labels;
  std::vector<double> predicted_bytes;
};

template <typename T>
struct FinetuneResult {
  nn::Checkpoint<T> checkpoint;  // best-validation parameters
  std::vector<EpochMetrics> epochs;
  Split split;
  std::size_t best_epoch = 0;
  double target_mean = 0.0;  // regression target standardization
  double target_std = 1.0;
  TaskMetrics validation;
};

namespace detail {

struct TaskData {
  nn::TaskKind task = nn::TaskKind::none;
  std::size_t n_classes = 0;
  std::vector<std::int32_t> labels;
  std::vector<double> targets;  // standardized log volume
  double mean = 0.0;
  double sd = 1.0;
};

inline TaskData task_data(std::span<const Flow> flows, nn::TaskKind task, std::size_t n_classes) {
  TaskData d;
  d.task = task;
  d.n_classes = n_classes;
  if (flows.empty()) throw Error(ErrorCode::EmptyCorpus, "no labeled flows");
  for (const auto& f : flows) {
    if (task == nn::TaskKind::classify) {
      if (!f.label) throw Error(ErrorCode::InvalidArgument, "flow without a label");
      if (*f.label < 0 || static_cast<std::size_t>(*f.label) >= n_classes) {
        throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(*f.label));
      }
      d.labels.push_back(*f.label);
    } else {
      if (!f.target) throw Error(ErrorCode::InvalidArgument, "flow without a regression target");
      d.targets.push_back(volume_to_target(*f.target));
    }
  }
  if (task == nn::TaskKind::classify) {
    if (std::set<std::int32_t>(d.labels.begin(), d.labels.end()).size() < 2) {
      throw Error(ErrorCode::DegenerateLabels, "classification needs at least two classes");
    }
  }
  return d;
}

inline void standardize(TaskData& d, const std::vector<std::size_t>& train) {
  double m = 0;
  for (auto i : train) m += d.targets[i];
  m /= static_cast<double>(train.size());
  double v = 0;
  for (auto i : train) v += (d.targets[i] - m) * (d.targets[i] - m);
  const double sd = std::sqrt(v / static_cast<double>(train.size()));
  d.mean = m;
  d.sd = sd > 1e-12 ? sd : 1.0;
  for (auto& t : d.targets) t = (t - d.mean) / d.sd;
}

template <typename T>
nn::Tensor<T> example_loss(const nn::Tensor<T>& out, const TaskData& d, std::size_t i) {
  if (d.task == nn::TaskKind::classify) {
    const std::int64_t y = d.labels[i];
    return nn::cross_entropy(out, std::span<const std::int64_t>(&y, 1));
  }
  const T y = static_cast<T>(d.targets[i]);
  return nn::mse(out, std::span<const T>(&y, 1));
}

template <typename T>
std::vector<std::vector<T>> snapshot(const nn::ParamSet<T>& ps) {
  std::vector<std::vector<T>> out;
  for (const auto& e : ps.entries()) out.emplace_back(e.tensor.data().begin(), e.tensor.data().end());
  return out;
}

template <typename T>
void load_snapshot(nn::ParamSet<T>& ps, const std::vector<std::vector<T>>& snap) {
  for (std::size_t k = 0; k < snap.size(); ++k) {
    nn::Tensor<T> t = ps.entries()[k].tensor;
    std::copy(snap[k].begin(), snap[k].end(), t.data().begin());
  }
}

struct Evaluation {
  double loss = 0.0;
  double score = 0.0;
  std::vector<std::int32_t> labels;
  std::vector<double> values;  // standardized predictions
};

/// forward(i, opt) gives the head output for example i.
template <typename T, typename Forward>
Evaluation evaluate(const Forward& forward, const TaskData& d, const std::vector<std::size_t>& idx) {
  Evaluation ev;
  std::vector<std::int32_t> truth;
  for (auto i : idx) {
    auto out = forward(i, nn::ForwardOptions{});
    ev.loss += static_cast<double>(example_loss(out, d, i).item());
    if (d.task == nn::TaskKind::classify) {
      auto v = out.data();
      ev.labels.push_back(static_cast<std::int32_t>(std::max_element(v.begin(), v.end()) - v.begin()));
      truth.push_back(d.labels[i]);
    } else {
      ev.values.push_back(static_cast<double>(out.item()));
    }
  }
  if (idx.empty()) return ev;
  ev.loss /= static_cast<double>(idx.size());
  if (d.task == nn::TaskKind::classify) {
    ev.score = classification_report(ev.labels, truth, d.n_classes).macro_f1;
  } else if (idx.size() >= 2) {
    std::vector<double> y;
    for (auto i : idx) y.push_back(d.targets[i]);
    ev.score = regression_report(ev.values, y).r2;
  }
  return ev;
}

template <typename T, typename Forward>
std::vector<EpochMetrics> fit(nn::ParamSet<T>& ps, const Forward& forward, const TaskData& d, const Split& split,
                              const FinetuneConfig& cfg, std::uint64_t seed, std::size_t& best_epoch) {
  if (split.train.empty()) throw Error(ErrorCode::EmptyCorpus, "training split is empty");
  Rng rng(seed);
  nn::Adam<T> adam(ps, cfg.adam);
  std::vector<EpochMetrics> history;
  auto best = snapshot(ps);
  double best_score = -std::numeric_limits<double>::infinity();
  double best_loss = std::numeric_limits<double>::infinity();
  best_epoch = 0;
  std::vector<std::size_t> order = split.train;
  const nn::ForwardOptions train_opt{true, &rng, nullptr};
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double total = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      ps.zero_grad();
      const T inv = T(1) / static_cast<T>(e - b);
      for (std::size_t k = b; k < e; ++k) {
        auto loss = example_loss(forward(order[k], train_opt), d, order[k]);
        total += static_cast<double>(loss.item());
        nn::scale(loss, inv).backward();
      }
      adam.step();
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = total / static_cast<double>(order.size());
    const auto& held = split.validation.empty() ? split.train : split.validation;
    const Evaluation ev = evaluate<T>(forward, d, held);
    m.validation_loss = ev.loss;
    m.validation_score = ev.score;
    history.push_back(m);
    // Classification keeps the best macro-F1 (loss breaks ties); regression
    // keeps the lowest validation loss.
    const bool better = d.task == nn::TaskKind::classify
                            ? (ev.score > best_score || (ev.score == best_score && ev.loss < best_loss))
                            : ev.loss < best_loss;
    if (better) {
      best_score = ev.score;
      best_loss = ev.loss;
      best = snapshot(ps);
      best_epoch = epoch;
    }
  }
  load_snapshot(ps, best);
  return history;
}

template <typename T, typename Forward>
TaskMetrics held_out_metrics(const Forward& forward, const TaskData& d, const std::vector<std::size_t>& idx) {
  TaskMetrics tm;
  tm.indices = idx;
  if (idx.empty()) return tm;
  const Evaluation ev = evaluate<T>(forward, d, idx);
  if (d.task == nn::TaskKind::classify) {
    std::vector<std::int32_t> truth;
    for (auto i : idx) truth.push_back(d.labels[i]);
    tm.predicted_labels = ev.labels;
    tm.classification = classification_report(ev.labels, truth, d.n_classes);
  } else {
    std::vector<double> truth;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      tm.predicted_bytes.push_back(target_to_volume(ev.values[k] * d.sd + d.mean));
      truth.push_back(target_to_volume(d.targets[idx[k]] * d.sd + d.mean));
    }
    if (idx.size() >= 2) tm.regression = regression_report(tm.predicted_bytes, truth);
  }
  return tm;
}

inline Split make_split(const TaskData& d, std::size_t n, double fraction, std::uint64_t seed) {
  return d.task == nn::TaskKind::classify ? stratified_split(d.labels, fraction, seed) : random_split(n, fraction, seed);
}

}  // namespace detail

/// Supervised fine-tuning of a model carrying a task head. The model ends
/// up holding the best-validation parameters; with freeze_backbone only the
/// head ("task." parameters) is updated.
template <typename T>
FinetuneResult<T> finetune(nn::TrafficModel<T>& model, std::span<const Flow> flows, const FinetuneConfig& cfg, std::uint64_t seed,
                           const Vocabulary* vocab = nullptr) {
  if (model.config().mode != nn::ModelMode::encoder) throw Error(ErrorCode::WrongMode, "fine-tuning needs an encoder");
  const nn::TaskKind task = model.config().task;
  if (task == nn::TaskKind::none) throw Error(ErrorCode::WrongMode, "attach a classifier or regressor first");
  detail::TaskData d = detail::task_data(flows, task, model.config().n_classes);
  FinetuneResult<T> res;
  res.split = detail::make_split(d, flows.size(), cfg.train_fraction, mix_seed(seed, 1));
  if (task == nn::TaskKind::regress) detail::standardize(d, res.split.train);
  res.target_mean = d.mean;
  res.target_std = d.sd;

  std::vector<FlowInput> inputs;
  for (const auto& f : flows) inputs.push_back(flow_input(f, cfg.features, vocab));
  auto forward = [&](std::size_t i, const nn::ForwardOptions& opt) { return task_forward(model, inputs[i], opt); };

  model.params().set_trainable("", !cfg.freeze_backbone);
  model.params().set_trainable("task.", true);
  res.epochs = detail::fit(model.params(), forward, d, res.split, cfg, mix_seed(seed, 2), res.best_epoch);
  model.params().set_trainable("", true);

  res.validation = detail::held_out_metrics<T>(forward, d, res.split.validation);
  std::ostringstream meta;
  meta.precision(17);
  meta << "task=" << (task == nn::TaskKind::classify ? "classify" : "regress") << "\ninput=" << to_string(cfg.features.kind)
       << "\npatch_size=" << cfg.features.patch_size << "\nmax_packets=" << cfg.features.max_packets
       << "\ntarget_mean=" << res.target_mean << "\ntarget_std=" << res.target_std << "\nbest_epoch=" << res.best_epoch;
  res.checkpoint = nn::capture(model, res.best_epoch, static_cast<const nn::Adam<T>*>(nullptr), nullptr, meta.str());
  return res;
}

template <typename T>
struct BaselineResult {
  std::vector<EpochMetrics> epochs;
  Split split;
  std::size_t best_epoch = 0;
  TaskMetrics validation;
};

/// The task head alone on flat raw features (no backbone), trained and
/// split exactly like finetune() for the same seed.
template <typename T = double>
BaselineResult<T> head_only_baseline(std::span<const Flow> flows, nn::TaskKind task, std::size_t n_classes,
                                     const FinetuneConfig& cfg, std::uint64_t seed,
                                     const std::vector<std::size_t>& hidden = kHeadHidden) {
  detail::TaskData d = detail::task_data(flows, task, n_classes);
  BaselineResult<T> res;
  res.split = detail::make_split(d, flows.size(), cfg.train_fraction, mix_seed(seed, 1));
  if (task == nn::TaskKind::regress) detail::standardize(d, res.split.train);
  std::vector<std::vector<T>> xs;
  for (const auto& f : flows) {
    auto v = baseline_vector(f, cfg.features);
    xs.emplace_back(v.begin(), v.end());
  }
  nn::HeadOnlyModel<T> head(xs.front().size(), task, n_classes, hidden, seed);
  auto forward = [&](std::size_t i, const nn::ForwardOptions&) {
    return head(nn::Tensor<T>::constant(1, xs[i].size(), xs[i]));
  };
  res.epochs = detail::fit(head.params(), forward, d, res.split, cfg, mix_seed(seed, 2), res.best_epoch);
  res.validation = detail::held_out_metrics<T>(forward, d, res.split.validation);
  return res;
}

/// Class probabilities of a fine-tuned classifier.
template <typename T>
std::vector<double> classify_probabilities(const nn::TrafficModel<T>& model, const Flow& flow, const FeatureOptions& opt,
                                           const Vocabulary* vocab = nullptr) {
  if (model.config().task != nn::TaskKind::classify) throw Error(ErrorCode::WrongMode, "model has no classifier");
  auto logits = task_forward(model, flow_input(flow, opt, vocab));
  auto p = nn::softmax_values<T>(logits.data());
  return std::vector<double>(p.begin(), p.end());
}

/// Evaluates a fine-tuned model on labeled flows (all of them).
template <typename T>
TaskMetrics evaluate_flows(const nn::TrafficModel<T>& model, std::span<const Flow> flows, const FeatureOptions& opt,
                           double target_mean = 0.0, double target_std = 1.0, const Vocabulary* vocab = nullptr) {
  const nn::TaskKind task = model.config().task;
  if (task == nn::TaskKind::none) throw Error(ErrorCode::WrongMode, "model has no task head");
  detail::TaskData d;
  d.task = task;
  d.n_classes = model.config().n_classes;
  for (const auto& f : flows) {
    if (task == nn::TaskKind::classify) {
      if (!f.label) throw Error(ErrorCode::InvalidArgument, "flow without a label");
      d.labels.push_back(*f.label);
    } else {
      if (!f.target) throw Error(ErrorCode::InvalidArgument, "flow without a regression target");
      d.targets.push_back((volume_to_target(*f.target) - target_mean) / target_std);
    }
  }
  d.mean = target_mean;
  d.sd = target_std;
  std::vector<FlowInput> inputs;
  for (const auto& f : flows) inputs.push_back(flow_input(f, opt, vocab));
  auto forward = [&](std::size_t i, const nn::ForwardOptions& o) { return task_forward(model, inputs[i], o); };
  std::vector<std::size_t> all(flows.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return detail::held_out_metrics<T>(forward, d, all);
}

// ---------------------------------------------------------------------------
// Generation

/// Unigram token of a byte in every vocabulary.
inline TokenId byte_token(std::uint8_t b) { return kFirstDataId + b; }

struct FieldRecord {
  std::uint8_t ttl = 0;
  std::uint16_t ip_length = 0;
  std::int64_t inter_arrival_us = 0;
  bool operator==(const FieldRecord&) const = default;
};

struct GeneratedSample {
  std::int32_t label = 0;
  std::vector<FieldRecord> records;
};

inline std::vector<FieldRecord> field_records(const Flow& f, std::size_t max_packets = 3) {
  std::vector<FieldRecord> out;
  for (std::size_t i = 0; i < std::min(max_packets, f.packets.size()); ++i) {
    const Packet& p = f.packets[i];
    out.push_back({p.ip.ttl, p.ip.total_length, i == 0 ? 0 : std::max<std::int64_t>(0, p.timestamp_us - f.packets[i - 1].timestamp_us)});
  }
  return out;
}

inline std::vector<TokenId> generation_prompt(std::int32_t label) {
  if (label < 0 || static_cast<TokenId>(label) >= special::label_count) {
    throw Error(ErrorCode::LabelOutOfRange, "prompt label must be in 0..7");
  }
  return {special::bos, special::label(static_cast<unsigned>(label))};
}

/// [BOS] [LABEL_c] ([TIME_e] ttl len_hi len_lo)* [EOS]
inline std::vector<TokenId> encode_field_records(std::int32_t label, std::span<const FieldRecord> records) {
  auto ids = generation_prompt(label);
  for (const auto& r : records) {
    ids.push_back(time_interval_token(r.inter_arrival_us));
    ids.push_back(byte_token(r.ttl));
    ids.push_back(byte_token(static_cast<std::uint8_t>(r.ip_length >> 8)));
    ids.push_back(byte_token(static_cast<std::uint8_t>(r.ip_length & 0xFF)));
  }
  ids.push_back(special::eos);
  return ids;
}

/// Inverse of encode_field_records. Inter-arrival times come back as the
/// lower edge of their [TIME] bucket. nullopt when the ids do not follow
/// the record grammar.
inline std::optional<GeneratedSample> decode_field_records(std::span<const TokenId> ids, std::size_t max_records = 3) {
  if (ids.size() < 3 || ids[0] != special::bos) return std::nullopt;
  if (ids[1] < special::label_base || ids[1] >= special::label_base + special::label_count) return std::nullopt;
  GeneratedSample s;
  s.label = static_cast<std::int32_t>(ids[1] - special::label_base);
  auto is_byte = [](TokenId t) { return t >= kFirstDataId && t < kFirstDataId + kUnigramCount; };
  std::size_t i = 2;
  while (i < ids.size() && ids[i] != special::eos) {
    if (i + 4 > ids.size() || s.records.size() == max_records) return std::nullopt;
    const TokenId t = ids[i];
    if (t < special::time_base || t >= special::time_base + special::time_count) return std::nullopt;
    if (!is_byte(ids[i + 1]) || !is_byte(ids[i + 2]) || !is_byte(ids[i + 3])) return std::nullopt;
    FieldRecord r;
    r.inter_arrival_us = (std::int64_t{1} << (t - special::time_base)) - 1;
    r.ttl = static_cast<std::uint8_t>(ids[i + 1] - kFirstDataId);
    r.ip_length = static_cast<std::uint16_t>(((ids[i + 2] - kFirstDataId) << 8) | (ids[i + 3] - kFirstDataId));
    s.records.push_back(r);
    i += 4;
  }
  if (i == ids.size() || s.records.empty()) return std::nullopt;
  return s;
}

/// Draws a token id from logits. temperature 0 is argmax (lowest id on
/// ties); top_p < 1 samples from the smallest set of most likely ids whose
/// mass reaches top_p.
template <typename T>
TokenId sample_token(std::span<const T> logits, double temperature, double top_p, Rng& rng) {
  if (temperature <= 0.0) return static_cast<TokenId>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  std::vector<double> z(logits.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = static_cast<double>(logits[i]) / temperature;
  auto p = nn::softmax_values<double>(z);
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
  double mass = 0;
  std::size_t keep = 0;
  while (keep < order.size() && (keep == 0 || mass < top_p)) mass += p[order[keep++]];
  double u = rng.uniform() * mass;
  for (std::size_t k = 0; k < keep; ++k) {
    if (u < p[order[k]]) return static_cast<TokenId>(order[k]);
    u -= p[order[k]];
  }
  return static_cast<TokenId>(order[keep - 1]);
}

/// Extends the prompt one token at a time until [EOS] or max_len tokens.
template <typename T>
std::vector<TokenId> generate(const nn::TrafficModel<T>& model, std::span<const TokenId> prompt, std::size_t max_len,
                              double temperature, std::uint64_t seed, double top_p = 1.0) {
  if (model.config().mode != nn::ModelMode::decoder) throw Error(ErrorCode::WrongMode, "generation needs a decoder");
  if (prompt.empty()) throw Error(ErrorCode::EmptyPrompt, "empty prompt");
  std::vector<TokenId> out(prompt.begin(), prompt.end());
  const std::size_t limit = std::min(max_len, model.config().max_len);
  Rng rng(seed);
  while (out.size() < limit && out.back() != special::eos) {
    auto logits = model.decoder_logits(out);
    const std::size_t v = logits.cols();
    auto last = logits.data().subspan((logits.rows() - 1) * v, v);
    out.push_back(sample_token<T>(last, temperature, top_p, rng));
  }
  return out;
}

struct GeneratedFlows {
  std::vector<GeneratedSample> samples;
  std::size_t dropped = 0;  // outputs that did not decode
};

template <typename T>
GeneratedFlows generate_flows(const nn::TrafficModel<T>& model, std::int32_t label, std::size_t n, double temperature,
                              std::uint64_t seed, double top_p = 1.0, std::size_t max_records = 3) {
  if (model.config().mode != nn::ModelMode::decoder) throw Error(ErrorCode::WrongMode, "generation needs a decoder");
  GeneratedFlows g;
  const auto prompt = generation_prompt(label);
  const std::size_t max_len = 2 + 4 * max_records + 1;
  for (std::size_t i = 0; i < n; ++i) {
    const auto ids = generate(model, prompt, max_len, temperature, mix_seed(seed, i), top_p);
    if (auto s = decode_field_records(ids, max_records)) {
      g.samples.push_back(std::move(*s));
    } else {
      ++g.dropped;
    }
  }
  return g;
}

inline std::string field_records_csv(std::span<const GeneratedSample> samples) {
  std::ostringstream out;
  out << "sample,label,packet,ttl,ip_length,inter_arrival_us\n";
  for (std::size_t s = 0; s < samples.size(); ++s) {
    for (std::size_t k = 0; k < samples[s].records.size(); ++k) {
      const auto& r = samples[s].records[k];
      out << s << ',' << samples[s].label << ',' << k << ',' << int(r.ttl) << ',' << r.ip_length << ',' << r.inter_arrival_us << '\n';
    }
  }
  return out.str();
}

/// Next-token training on fixed token sequences (field records).
template <typename T>
std::vector<LossRecord> finetune_generator(nn::TrafficModel<T>& model, std::span<const std::vector<TokenId>> sequences,
                                           std::size_t steps, std::size_t batch_size, const nn::AdamConfig& adam_cfg,
                                           std::uint64_t seed) {
  if (model.config().mode != nn::ModelMode::decoder) throw Error(ErrorCode::WrongMode, "generator needs a decoder");
  if (sequences.empty()) throw Error(ErrorCode::EmptyCorpus, "no sequences");
  std::vector<NextTokenExample> pool;
  for (const auto& s : sequences) pool.push_back(next_token_example(s));
  Rng rng(seed);
  nn::Adam<T> adam(model.params(), adam_cfg);
  const nn::ForwardOptions opt{true, &rng, nullptr};
  std::vector<LossRecord> history;
  for (std::size_t step = 1; step <= steps; ++step) {
    model.params().zero_grad();
    double total = 0;
    for (std::size_t b = 0; b < batch_size; ++b) {
      auto loss = next_token_loss(model, pool[rng.below(pool.size())], opt);
      total += static_cast<double>(loss.item());
      nn::scale(loss, T(1) / static_cast<T>(batch_size)).backward();
    }
    const double lr = adam.next_lr();
    adam.step();
    history.push_back({step, ObjectiveKind::next_token, total / static_cast<double>(batch_size), lr});
  }
  return history;
}

}  // namespace trafficlm
