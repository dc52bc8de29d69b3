#pragma once

#include <bit>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "trafficlm/bytes.hpp"
#include "trafficlm/error.hpp"
#include "trafficlm/nn/model.hpp"
#include "trafficlm/nn/optim.hpp"

namespace trafficlm::nn {

// "TFMC" checkpoint, all integers little-endian:
//   magic "TFMC", u8 version (1), u8 scalar width (8 = f64, 4 = f32)
//   config block (u32 length + fields, see write_config)
//   u64 training step
//   u32 parameter count; per parameter:
//     u16 name length, name, u32 rows, u32 cols, rows*cols scalars
//   u8 has optimizer; if set: u64 adam step, then per parameter (same
//     order) rows*cols first moments followed by rows*cols second moments
//   u32 length + RNG state text
//   u32 length + metadata text

inline constexpr std::uint8_t kCheckpointVersion = 1;

template <typename T>
struct NamedTensor {
  std::string name;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<T> values;
  bool operator==(const NamedTensor&) const = default;
};

template <typename T>
struct OptimizerState {
  std::uint64_t step = 0;
  std::vector<std::vector<T>> first;
  std::vector<std::vector<T>> second;
  bool operator==(const OptimizerState&) const = default;
};

template <typename T = double>
struct Checkpoint {
  ModelConfig config;
  std::uint64_t step = 0;
  std::vector<NamedTensor<T>> params;
  std::optional<OptimizerState<T>> optimizer;
  std::string rng_state;
  std::string metadata;
  bool operator==(const Checkpoint&) const = default;
};

namespace detail {

template <typename T>
void write_scalar(ByteWriter& w, T v) {
  if constexpr (std::is_same_v<T, double>) {
    w.f64le(v);
  } else {
    w.f32le(v);
  }
}

template <typename T>
T read_scalar(ByteReader& r) {
  if constexpr (std::is_same_v<T, double>) {
    return r.f64le();
  } else {
    return r.f32le();
  }
}

inline void write_config(ByteWriter& w, const ModelConfig& c) {
  ByteWriter b;
  for (std::size_t v : {c.d_model, c.n_heads, c.n_layers, c.ffn_dim, c.max_len, c.vocab_size, c.n_segments}) {
    b.u32le(static_cast<std::uint32_t>(v));
  }
  b.f64le(c.dropout);
  b.u8(static_cast<std::uint8_t>(c.mode));
  b.u32le(static_cast<std::uint32_t>(c.patch_dim));
  b.u32le(static_cast<std::uint32_t>(c.mae_decoder_layers));
  b.u8(static_cast<std::uint8_t>(c.task));
  b.u32le(static_cast<std::uint32_t>(c.n_classes));
  b.u32le(static_cast<std::uint32_t>(c.head_hidden.size()));
  for (auto h : c.head_hidden) b.u32le(static_cast<std::uint32_t>(h));
  w.u32le(static_cast<std::uint32_t>(b.size()));
  w.bytes(b.buffer());
}

inline ModelConfig read_config(ByteReader& outer) {
  ByteReader r(outer.take(outer.u32le()), ErrorCode::CorruptTable);
  ModelConfig c;
  for (std::size_t* v : {&c.d_model, &c.n_heads, &c.n_layers, &c.ffn_dim, &c.max_len, &c.vocab_size, &c.n_segments}) {
    *v = r.u32le();
  }
  c.dropout = r.f64le();
  const std::uint8_t mode = r.u8();
  if (mode > 1) throw Error(ErrorCode::CorruptTable, "model mode");
  c.mode = static_cast<ModelMode>(mode);
  c.patch_dim = r.u32le();
  c.mae_decoder_layers = r.u32le();
  const std::uint8_t task = r.u8();
  if (task > 2) throw Error(ErrorCode::CorruptTable, "task kind");
  c.task = static_cast<TaskKind>(task);
  c.n_classes = r.u32le();
  const std::uint32_t nh = r.u32le();
  if (nh > r.remaining() / 4) throw Error(ErrorCode::CorruptTable, "head width count");
  c.head_hidden.resize(nh);
  for (auto& h : c.head_hidden) h = r.u32le();
  if (!r.empty()) throw Error(ErrorCode::CorruptTable, "trailing config bytes");
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::CorruptTable, std::string("stored config invalid: ") + e.what());
  }
  return c;
}

}  // namespace detail

template <typename T>
Bytes save_checkpoint(const Checkpoint<T>& ck) {
  static_assert(std::is_same_v<T, double> || std::is_same_v<T, float>);
  ByteWriter w;
  w.str("TFMC");
  w.u8(kCheckpointVersion);
  w.u8(sizeof(T));
  detail::write_config(w, ck.config);
  w.u64le(ck.step);
  w.u32le(static_cast<std::uint32_t>(ck.params.size()));
  for (const auto& p : ck.params) {
    if (p.values.size() != std::size_t{p.rows} * p.cols) throw Error(ErrorCode::ShapeMismatch, "parameter " + p.name);
    w.u16le(static_cast<std::uint16_t>(p.name.size()));
    w.str(p.name);
    w.u32le(p.rows);
    w.u32le(p.cols);
    for (T v : p.values) detail::write_scalar(w, v);
  }
  w.u8(ck.optimizer.has_value());
  if (ck.optimizer) {
    w.u64le(ck.optimizer->step);
    for (std::size_t k = 0; k < ck.params.size(); ++k) {
      for (T v : ck.optimizer->first.at(k)) detail::write_scalar(w, v);
      for (T v : ck.optimizer->second.at(k)) detail::write_scalar(w, v);
    }
  }
  w.u32le(static_cast<std::uint32_t>(ck.rng_state.size()));
  w.str(ck.rng_state);
  w.u32le(static_cast<std::uint32_t>(ck.metadata.size()));
  w.str(ck.metadata);
  return w.take();
}

template <typename T = double>
Checkpoint<T> load_checkpoint(ByteView data) {
  if (data.size() < 4 || std::string(data.begin(), data.begin() + 4) != "TFMC") {
    throw Error(ErrorCode::BadMagic, "not a TFMC checkpoint");
  }
  ByteReader r(data, ErrorCode::CorruptTable);
  r.skip(4);
  const std::uint8_t version = r.u8();
  if (version != kCheckpointVersion) throw Error(ErrorCode::VersionMismatch, "checkpoint version " + std::to_string(version));
  if (r.u8() != sizeof(T)) throw Error(ErrorCode::VersionMismatch, "checkpoint scalar width differs from the reader's");
  Checkpoint<T> ck;
  ck.config = detail::read_config(r);
  ck.step = r.u64le();
  const std::uint32_t n = r.u32le();
  for (std::uint32_t i = 0; i < n; ++i) {
    NamedTensor<T> p;
    p.name = r.str(r.u16le());
    p.rows = r.u32le();
    p.cols = r.u32le();
    const std::uint64_t count = std::uint64_t{p.rows} * p.cols;
    if (count > r.remaining() / sizeof(T)) throw Error(ErrorCode::CorruptTable, "parameter table truncated at " + p.name);
    p.values.resize(count);
    for (auto& v : p.values) v = detail::read_scalar<T>(r);
    ck.params.push_back(std::move(p));
  }
  const std::uint8_t has_opt = r.u8();
  if (has_opt > 1) throw Error(ErrorCode::CorruptTable, "optimizer flag");
  if (has_opt) {
    OptimizerState<T> o;
    o.step = r.u64le();
    for (const auto& p : ck.params) {
      if (2 * p.values.size() > r.remaining() / sizeof(T)) throw Error(ErrorCode::CorruptTable, "moment table truncated");
      std::vector<T> m(p.values.size()), v(p.values.size());
      for (auto& x : m) x = detail::read_scalar<T>(r);
      for (auto& x : v) x = detail::read_scalar<T>(r);
      o.first.push_back(std::move(m));
      o.second.push_back(std::move(v));
    }
    ck.optimizer = std::move(o);
  }
  ck.rng_state = r.str(r.u32le());
  ck.metadata = r.str(r.u32le());
  if (!r.empty()) throw Error(ErrorCode::CorruptTable, "trailing bytes after checkpoint");
  return ck;
}

/// Snapshot of a model (and optionally its optimizer and RNG).
template <typename T>
Checkpoint<T> capture(const TrafficModel<T>& model, std::uint64_t step, const Adam<T>* opt = nullptr, const Rng* rng = nullptr,
                      std::string metadata = {}) {
  Checkpoint<T> ck;
  ck.config = model.config();
  ck.step = step;
  for (const auto& e : model.params().entries()) {
    ck.params.push_back({e.name, static_cast<std::uint32_t>(e.tensor.rows()), static_cast<std::uint32_t>(e.tensor.cols()),
                         std::vector<T>(e.tensor.data().begin(), e.tensor.data().end())});
  }
  if (opt) ck.optimizer = OptimizerState<T>{opt->steps(), opt->first_moments(), opt->second_moments()};
  if (rng) ck.rng_state = rng->state();
  ck.metadata = std::move(metadata);
  return ck;
}

/// Copies stored parameters into the model by name. With strict set, every
/// model parameter must be present; otherwise missing ones (for example a
/// freshly attached head) keep their initial values. Returns the number of
/// parameters copied.
template <typename T>
std::size_t restore_parameters(TrafficModel<T>& model, const Checkpoint<T>& ck, bool strict = true) {
  std::size_t copied = 0;
  std::map<std::string, const NamedTensor<T>*> by_name;
  for (const auto& p : ck.params) by_name[p.name] = &p;
  for (const auto& e : model.params().entries()) {
    auto it = by_name.find(e.name);
    if (it == by_name.end()) {
      if (strict) throw Error(ErrorCode::CorruptTable, "checkpoint lacks parameter " + e.name);
      continue;
    }
    const auto& src = *it->second;
    if (src.rows != e.tensor.rows() || src.cols != e.tensor.cols()) {
      throw Error(ErrorCode::ShapeMismatch, "parameter " + e.name + " has a different shape");
    }
    Tensor<T> t = e.tensor;
    std::copy(src.values.begin(), src.values.end(), t.data().begin());
    ++copied;
  }
  return copied;
}

template <typename T>
TrafficModel<T> model_from_checkpoint(const Checkpoint<T>& ck) {
  TrafficModel<T> model(ck.config, 0);
  restore_parameters(model, ck, true);
  return model;
}

template <typename T>
void restore_optimizer(Adam<T>& opt, const Checkpoint<T>& ck) {
  if (!ck.optimizer) throw Error(ErrorCode::CorruptTable, "checkpoint carries no optimizer state");
  opt.restore(ck.optimizer->step, ck.optimizer->first, ck.optimizer->second);
}

}  // namespace trafficlm::nn
