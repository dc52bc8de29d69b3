#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trafficlm/error.hpp"
#include "trafficlm/nn/layers.hpp"
#include "trafficlm/nn/ops.hpp"
#include "trafficlm/nn/tensor.hpp"
#include "trafficlm/rng.hpp"
#include "trafficlm/tokenize.hpp"

namespace trafficlm::nn {

enum class ModelMode : std::uint8_t { encoder = 0, decoder = 1 };
enum class TaskKind : std::uint8_t { none = 0, classify = 1, regress = 2 };

inline std::string to_string(ModelMode m) { return m == ModelMode::encoder ? "encoder" : "decoder"; }

struct ModelConfig {
  std::size_t d_model = 128;
  std::size_t n_heads = 4;
  std::size_t n_layers = 4;
  std::size_t ffn_dim = 512;
  std::size_t max_len = 512;
  std::size_t vocab_size = 4096;
  std::size_t n_segments = 2;
  double dropout = 0.1;
  ModelMode mode = ModelMode::encoder;
  /// Width of continuous input rows (image patches, metadata rows); 0 = none.
  std::size_t patch_dim = 0;
  std::size_t mae_decoder_layers = 1;
  TaskKind task = TaskKind::none;
  std::size_t n_classes = 0;
  std::vector<std::size_t> head_hidden{256, 128, 64};

  void validate() const {
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
      throw Error(ErrorCode::Config, "d_model must be a positive multiple of n_heads");
    }
    if (ffn_dim == 0 || max_len == 0 || n_segments == 0) throw Error(ErrorCode::Config, "zero-sized model dimension");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorCode::Config, "dropout must be in [0,1)");
    if (vocab_size == 0 && patch_dim == 0) throw Error(ErrorCode::Config, "model needs a vocabulary or a patch input");
    if (mode == ModelMode::decoder && vocab_size == 0) throw Error(ErrorCode::Config, "decoder needs a vocabulary");
    if (task == TaskKind::classify && n_classes < 2) throw Error(ErrorCode::Config, "classifier needs >= 2 classes");
  }

  bool operator==(const ModelConfig&) const = default;
};

/// Transformer backbone plus the heads used by the pre-training objectives
/// and an optional fine-tuning head. All parameters live in one ParamSet;
/// names are stable and used by checkpoints.
template <typename T = double>
class TrafficModel {
 public:
  TrafficModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)), seed_(seed) {
    config_.validate();
    Rng rng(seed);
    const std::size_t d = config_.d_model;
    if (config_.vocab_size > 0) token_embedding_ = ps_.create("embed.token", config_.vocab_size, d, Init::fan_in, rng);
    position_embedding_ = ps_.create("embed.position", config_.max_len, d, Init::fan_in, rng);
    segment_embedding_ = ps_.create("embed.segment", config_.n_segments, d, Init::fan_in, rng);
    if (config_.patch_dim > 0) patch_projection_ = Linear<T>(ps_, "embed.patch", config_.patch_dim, d, rng);
    stack_ = TransformerStack<T>(ps_, "backbone", config_.n_layers, d, config_.n_heads, config_.ffn_dim, config_.dropout, rng);
    if (config_.vocab_size > 0) lm_head_ = Linear<T>(ps_, "head.lm", d, config_.vocab_size, rng);
    if (config_.mode == ModelMode::encoder) {
      pair_head_ = Linear<T>(ps_, "head.pair", d, 2, rng);
      order_head_ = Linear<T>(ps_, "head.order", d, 6, rng);
      if (config_.patch_dim > 0 && config_.mae_decoder_layers > 0) {
        mae_embed_ = Linear<T>(ps_, "mae.embed", d, d, rng);
        mae_mask_token_ = ps_.create("mae.mask_token", 1, d, Init::fan_in, rng);
        mae_position_ = ps_.create("mae.position", config_.max_len, d, Init::fan_in, rng);
        mae_stack_ = TransformerStack<T>(ps_, "mae.decoder", config_.mae_decoder_layers, d, config_.n_heads, config_.ffn_dim,
                                         config_.dropout, rng);
        mae_predict_ = Linear<T>(ps_, "mae.predict", d, config_.patch_dim, rng);
        has_mae_ = true;
      }
    }
    if (config_.task != TaskKind::none) build_task_head();
  }

  const ModelConfig& config() const { return config_; }
  ParamSet<T>& params() { return ps_; }
  const ParamSet<T>& params() const { return ps_; }
  bool causal() const { return config_.mode == ModelMode::decoder; }
  bool has_mae_decoder() const { return has_mae_; }

  /// Adds a fine-tuning head (classifier over n_classes, or a scalar
  /// regressor). Replacing an existing head is not supported.
  void attach_task(TaskKind kind, std::size_t n_classes = 0) {
    if (config_.task != TaskKind::none) throw Error(ErrorCode::InvalidArgument, "model already has a task head");
    config_.task = kind;
    config_.n_classes = kind == TaskKind::classify ? n_classes : 0;
    config_.validate();
    build_task_head();
  }

  /// L x d hidden states for token ids. Key positions holding [PAD] are
  /// masked out of attention; decoder mode adds the causal mask.
  Tensor<T> encode_tokens(std::span<const TokenId> ids, std::span<const std::uint8_t> segments = {},
                          const ForwardOptions& opt = {}) const {
    if (config_.vocab_size == 0) throw Error(ErrorCode::ShapeMismatch, "model has no token input");
    const std::size_t len = ids.size();
    if (len == 0) throw Error(ErrorCode::ShapeMismatch, "empty input");
    if (len > config_.max_len) throw Error(ErrorCode::TooLong, "sequence of " + std::to_string(len) + " > max_len");
    for (auto id : ids) {
      if (id >= config_.vocab_size) throw Error(ErrorCode::IdOutOfRange, "token id " + std::to_string(id));
    }
    if (!segments.empty() && segments.size() != len) throw Error(ErrorCode::ShapeMismatch, "segment count differs");
    std::vector<std::uint32_t> pos(len), seg(len, 0);
    std::vector<bool> pad(len);
    for (std::size_t i = 0; i < len; ++i) {
      pos[i] = static_cast<std::uint32_t>(i);
      if (!segments.empty()) {
        if (segments[i] >= config_.n_segments) throw Error(ErrorCode::IdOutOfRange, "segment id");
        seg[i] = segments[i];
      }
      pad[i] = ids[i] == special::pad;
    }
    Tensor<T> x = add(add(embedding(token_embedding_, ids), embedding(position_embedding_, std::span<const std::uint32_t>(pos))),
                      embedding(segment_embedding_, std::span<const std::uint32_t>(seg)));
    x = maybe_dropout(x, config_.dropout, opt);
    return stack_(x, cast_mask<T>(attention_mask(len, causal(), pad)), opt);
  }

  /// L x d hidden states for continuous rows (L x patch_dim); positions give
  /// each row's position id (the original patch index for masked inputs).
  Tensor<T> encode_features(const Tensor<T>& rows, std::span<const std::size_t> positions = {},
                            const ForwardOptions& opt = {}) const {
    if (config_.patch_dim == 0) throw Error(ErrorCode::ShapeMismatch, "model has no patch input");
    if (rows.cols() != config_.patch_dim) throw Error(ErrorCode::ShapeMismatch, "patch width differs from patch_dim");
    const std::size_t len = rows.rows();
    if (len == 0) throw Error(ErrorCode::ShapeMismatch, "empty input");
    if (len > config_.max_len) throw Error(ErrorCode::TooLong, "sequence longer than max_len");
    if (!positions.empty() && positions.size() != len) throw Error(ErrorCode::ShapeMismatch, "position count differs");
    std::vector<std::uint32_t> pos(len), seg(len, 0);
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t p = positions.empty() ? i : positions[i];
      if (p >= config_.max_len) throw Error(ErrorCode::TooLong, "position beyond max_len");
      pos[i] = static_cast<std::uint32_t>(p);
    }
    Tensor<T> x = add(add(patch_projection_(rows), embedding(position_embedding_, std::span<const std::uint32_t>(pos))),
                      embedding(segment_embedding_, std::span<const std::uint32_t>(seg)));
    x = maybe_dropout(x, config_.dropout, opt);
    return stack_(x, causal() ? cast_mask<T>(attention_mask(len, true)) : std::vector<T>{}, opt);
  }

  /// Per-position vocabulary logits (masked-token and next-token heads).
  Tensor<T> token_logits(const Tensor<T>& hidden) const {
    if (config_.vocab_size == 0) throw Error(ErrorCode::ShapeMismatch, "model has no vocabulary head");
    return lm_head_(hidden);
  }

  /// L x V next-token logits; needs a decoder-mode model.
  Tensor<T> decoder_logits(std::span<const TokenId> ids, const ForwardOptions& opt = {}) const {
    if (config_.mode != ModelMode::decoder) throw Error(ErrorCode::WrongMode, "decoder_logits on an encoder");
    return token_logits(encode_tokens(ids, {}, opt));
  }

  /// Reconstructs all `total` patches from the encoded visible ones.
  Tensor<T> mae_reconstruct(const Tensor<T>& visible_hidden, std::span<const std::size_t> visible_index, std::size_t total,
                            const ForwardOptions& opt = {}) const {
    if (!has_mae_) throw Error(ErrorCode::WrongMode, "model has no reconstruction decoder");
    if (total > config_.max_len) throw Error(ErrorCode::TooLong, "too many patches");
    Tensor<T> x = scatter_rows(mae_embed_(visible_hidden), mae_mask_token_, visible_index, total);
    std::vector<std::uint32_t> pos(total);
    for (std::size_t i = 0; i < total; ++i) pos[i] = static_cast<std::uint32_t>(i);
    x = add(x, embedding(mae_position_, std::span<const std::uint32_t>(pos)));
    return mae_predict_(mae_stack_(x, {}, opt));
  }

  /// 1 x d summary: the first position for token input, the row mean for
  /// patch input.
  Tensor<T> pool(const Tensor<T>& hidden, bool token_input) const {
    if (token_input) {
      const std::size_t first = 0;
      return gather_rows(hidden, std::span<const std::size_t>(&first, 1));
    }
    return mean_rows(hidden);
  }

  Tensor<T> pair_logits(const Tensor<T>& pooled) const {
    if (config_.mode != ModelMode::encoder) throw Error(ErrorCode::WrongMode, "pair head needs an encoder");
    return pair_head_(pooled);
  }

  Tensor<T> order_logits(const Tensor<T>& pooled) const {
    if (config_.mode != ModelMode::encoder) throw Error(ErrorCode::WrongMode, "order head needs an encoder");
    return order_head_(pooled);
  }

  /// Fine-tuning head output: 1 x n_classes logits or 1 x 1 regression.
  Tensor<T> task_output(const Tensor<T>& pooled) const {
    if (!task_head_) throw Error(ErrorCode::WrongMode, "model has no task head");
    return (*task_head_)(pooled);
  }

  Tensor<T>& position_table() { return position_embedding_; }
  Tensor<T>& segment_table() { return segment_embedding_; }

 private:
  void build_task_head() {
    Rng rng(mix_seed(seed_, 0x7461736bULL));
    const bool cls = config_.task == TaskKind::classify;
    task_head_ = Mlp<T>(ps_, cls ? "task.classifier" : "task.regressor", config_.d_model, config_.head_hidden,
                        cls ? config_.n_classes : 1, cls ? Activation::gelu : Activation::leaky_relu, rng);
  }

  ModelConfig config_;
  std::uint64_t seed_ = 0;
  ParamSet<T> ps_;
  Tensor<T> token_embedding_, position_embedding_, segment_embedding_;
  Linear<T> patch_projection_;
  TransformerStack<T> stack_;
  Linear<T> lm_head_, pair_head_, order_head_;
  bool has_mae_ = false;
  Linear<T> mae_embed_;
  Tensor<T> mae_mask_token_, mae_position_;
  TransformerStack<T> mae_stack_;
  Linear<T> mae_predict_;
  std::optional<Mlp<T>> task_head_;
};

/// Classifier/regressor applied straight to a flat feature vector, with no
/// backbone. Mirrors the head used on top of the backbone.
template <typename T = double>
class HeadOnlyModel {
 public:
  HeadOnlyModel(std::size_t input_dim, TaskKind task, std::size_t n_classes, std::vector<std::size_t> hidden, std::uint64_t seed)
      : task_(task), input_dim_(input_dim) {
    if (task == TaskKind::none) throw Error(ErrorCode::InvalidArgument, "head-only model needs a task");
    Rng rng(mix_seed(seed, 0x7461736bULL));
    const bool cls = task == TaskKind::classify;
    head_ = Mlp<T>(ps_, cls ? "task.classifier" : "task.regressor", input_dim, hidden, cls ? n_classes : 1,
                   cls ? Activation::gelu : Activation::leaky_relu, rng);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    if (x.cols() != input_dim_) throw Error(ErrorCode::ShapeMismatch, "head-only input width");
    return head_(x);
  }

  ParamSet<T>& params() { return ps_; }
  TaskKind task() const { return task_; }

 private:
  TaskKind task_;
  std::size_t input_dim_;
  ParamSet<T> ps_;
  Mlp<T> head_;
};

}  // namespace trafficlm::nn
