#pragma once

#include <charconv>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "trafficlm/error.hpp"

namespace trafficlm {

/// key = value run configuration. Every key has a default; unknown keys are
/// rejected. Later sources (files, then command-line overrides) win.
class RunConfig {
 public:
  enum class Kind { text, count, u64, real, optional_real, flag };

  struct Key {
    std::string name;
    std::string value;
    std::string help;
    Kind kind = Kind::text;
  };

  static const std::vector<Key>& keys() {
    static const std::vector<Key> k{
        {"seed", "1", "master seed; every stage derives its streams from it", Kind::u64},
        {"paths.out_dir", ".", "directory receiving stage outputs; relative paths below resolve against it"},
        {"paths.pcap", "trace.pcap", "capture read by ingest, written by synth"},
        {"paths.truth", "", "ground-truth CSV from synth used to label flows at ingest"},
        {"paths.flows", "flows.tflw", "flow store"},
        {"paths.vocab", "vocab.tfv", "tokenizer vocabulary"},
        {"paths.pretrained", "pretrained.tfmc", "checkpoint written by pretrain and read by finetune"},
        {"paths.finetuned", "finetuned.tfmc", "checkpoint written by finetune and read by evaluate and generate"},
        {"synth.preset", "mixed", "synthetic corpus preset"},
        {"synth.flows", "64", "number of synthetic flows", Kind::count},
        {"synth.nanosecond", "false", "write nanosecond pcap timestamps", Kind::flag},
        {"flow.idle_timeout_us", "64000000", "idle gap that ends a flow", Kind::count},
        {"flow.max_packets", "1024", "packets after which a flow is cut", Kind::count},
        {"ingest.anonymize_salt", "", "non-empty: pseudonymize addresses with this salt"},
        {"tokenize.vocab_size", "4096", "BPE vocabulary size", Kind::count},
        {"tokenize.max_len", "512", "token sequence cap", Kind::count},
        {"tokenize.include_header", "true", "tokenize IP/transport headers as well as payloads", Kind::flag},
        {"tokenize.time_tokens", "false", "insert [TIME] tokens between packets", Kind::flag},
        {"mfr.patch_size", "4", "MFR patch side", Kind::count},
        {"model.d_model", "128", "hidden width", Kind::count},
        {"model.n_heads", "4", "attention heads", Kind::count},
        {"model.n_layers", "4", "Transformer layers", Kind::count},
        {"model.ffn_dim", "512", "feed-forward width", Kind::count},
        {"model.max_len", "512", "longest input", Kind::count},
        {"model.dropout", "0.1", "dropout rate", Kind::real},
        {"model.mae_decoder_layers", "1", "layers of the masked-patch reconstruction decoder", Kind::count},
        {"pretrain.objective", "masked_patch", "masked_token|masked_field|masked_span|masked_patch|same_origin|packet_order|next_token"},
        {"pretrain.mask_ratio", "", "empty: 0.9 for masked_patch, 0.15 otherwise", Kind::optional_real},
        {"pretrain.span_mean_len", "3", "mean span length for span masking", Kind::real},
        {"pretrain.batch_size", "32", "examples per step", Kind::count},
        {"pretrain.steps", "1000", "optimizer steps", Kind::count},
        {"pretrain.checkpoint_every", "0", "also write a checkpoint every K steps (0 = only at the end)", Kind::count},
        {"adam.lr", "0.001", "learning rate after warmup", Kind::real},
        {"adam.beta1", "0.9", "first-moment decay", Kind::real},
        {"adam.beta2", "0.999", "second-moment decay", Kind::real},
        {"adam.eps", "1e-08", "denominator guard", Kind::real},
        {"adam.warmup_steps", "100", "linear warmup length", Kind::count},
        {"adam.clip_norm", "1", "global gradient norm cap (0 = off)", Kind::real},
        {"finetune.task", "classify", "classify|regress|generate"},
        {"finetune.input", "patches", "patches|tokens|metadata"},
        {"finetune.epochs", "20", "passes over the training split", Kind::count},
        {"finetune.batch_size", "32", "examples per step", Kind::count},
        {"finetune.train_fraction", "0.8", "share of flows used for training", Kind::real},
        {"finetune.freeze_backbone", "false", "train the task head only", Kind::flag},
        {"finetune.from_pretrained", "true", "start from paths.pretrained when it exists", Kind::flag},
        {"finetune.max_packets", "32", "metadata rows per flow", Kind::count},
        {"finetune.token_packets", "5", "packets tokenized per flow for token input", Kind::count},
        {"finetune.n_classes", "0", "0: one more than the largest label", Kind::count},
        {"finetune.baseline", "true", "also fit the head-only baseline", Kind::flag},
        {"finetune.generator_steps", "1000", "optimizer steps for the generate task", Kind::count},
        {"generate.label", "0", "class prompt", Kind::count},
        {"generate.n", "1000", "samples to draw", Kind::count},
        {"generate.temperature", "1", "softmax temperature (0 = greedy)", Kind::real},
        {"generate.top_p", "1", "nucleus mass kept when sampling", Kind::real},
        {"generate.max_records", "3", "packets per generated record", Kind::count},
    };
    return k;
  }

  RunConfig() {
    for (const auto& k : keys()) values_[k.name] = k.value;
  }

  static const Key* find(std::string_view key) {
    for (const auto& k : keys()) {
      if (k.name == key) return &k;
    }
    return nullptr;
  }

  static bool known(std::string_view key) { return find(key) != nullptr; }

  /// Rejects unknown keys and values that do not parse as the key's type,
  /// so a typo fails even when the running stage never reads the key.
  void set(const std::string& key, const std::string& value) {
    const Key* k = find(key);
    if (!k) throw Error(ErrorCode::Config, "unknown config key '" + key + "'");
    const std::string old = values_[key];
    values_[key] = value;
    try {
      check(*k);
    } catch (const Error&) {
      values_[key] = old;
      throw;
    }
  }

  /// "key=value" (surrounding blanks ignored).
  void set_assignment(std::string_view text) {
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorCode::Config, "expected key=value, got '" + std::string(text) + "'");
    set(trim(text.substr(0, eq)), trim(text.substr(eq + 1)));
  }

  /// Lines of key = value; '#' starts a comment.
  void merge_text(std::string_view text) {
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    for (std::string line; std::getline(in, line);) {
      ++line_no;
      if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
      if (trim(line).empty()) continue;
      try {
        set_assignment(line);
      } catch (const Error& e) {
        const std::string what = e.what();
        throw Error(ErrorCode::Config, "line " + std::to_string(line_no) + ": " + what.substr(what.find(": ") + 2));
      }
    }
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw Error(ErrorCode::Config, "unknown config key '" + key + "'");
    return it->second;
  }

  std::int64_t integer(const std::string& key) const {
    const auto& s = str(key);
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) throw bad(key, "an integer");
    return v;
  }

  std::size_t count(const std::string& key) const {
    const auto v = integer(key);
    if (v < 0) throw bad(key, "a non-negative integer");
    return static_cast<std::size_t>(v);
  }

  std::uint64_t u64(const std::string& key) const {
    const auto& s = str(key);
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) throw bad(key, "an unsigned integer");
    return v;
  }

  double real(const std::string& key) const {
    const auto& s = str(key);
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw bad(key, "a number");
      return v;
    } catch (const std::logic_error&) {
      throw bad(key, "a number");
    }
  }

  bool flag(const std::string& key) const {
    const auto& s = str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw bad(key, "true or false");
  }

  /// Sorted key = value lines; the run manifest embeds this verbatim.
  std::string resolved() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }

  bool operator==(const RunConfig&) const = default;

 private:
  static std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
  }

  void check(const Key& k) const {
    switch (k.kind) {
      case Kind::text: break;
      case Kind::count: count(k.name); break;
      case Kind::u64: u64(k.name); break;
      case Kind::real: real(k.name); break;
      case Kind::optional_real:
        if (!str(k.name).empty()) real(k.name);
        break;
      case Kind::flag: flag(k.name); break;
    }
  }

  Error bad(const std::string& key, const char* what) const {
    return Error(ErrorCode::Config, "config key '" + key + "' must be " + what + ", got '" + str(key) + "'");
  }

  std::map<std::string, std::string> values_;
};

}  // namespace trafficlm
