#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "trafficlm/error.hpp"
#include "trafficlm/nn/ops.hpp"
#include "trafficlm/nn/tensor.hpp"
#include "trafficlm/rng.hpp"

namespace trafficlm::nn {

enum class Init { zeros, ones, fan_in };

/// Named, ordered collection of trainable tensors.
template <typename T>
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
  };

  /// fan_in draws uniformly from +-1/sqrt(rows).
  Tensor<T> create(const std::string& name, std::size_t rows, std::size_t cols, Init init, Rng& rng) {
    if (index_.count(name)) throw Error(ErrorCode::InvalidArgument, "duplicate parameter name " + name);
    std::vector<T> v(rows * cols, T(0));
    if (init == Init::ones) {
      std::fill(v.begin(), v.end(), T(1));
    } else if (init == Init::fan_in) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
      for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
    }
    Tensor<T> t = Tensor<T>::parameter(rows, cols, std::move(v));
    index_[name] = entries_.size();
    entries_.push_back({name, t});
    return t;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::optional<Tensor<T>> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return entries_[it->second].tensor;
  }

  Tensor<T> at(const std::string& name) const {
    auto t = find(name);
    if (!t) throw Error(ErrorCode::InvalidArgument, "no parameter named " + name);
    return *t;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.size();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

  /// Marks parameters whose name starts with prefix as (non-)trainable.
  void set_trainable(const std::string& prefix, bool on) {
    for (auto& e : entries_) {
      if (e.name.rfind(prefix, 0) == 0) e.tensor.set_requires_grad(on);
    }
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

struct ForwardOptions {
  bool train = false;
  Rng* rng = nullptr;  // required for dropout when train is set
  /// When set, attention probabilities (one L x L block per head, per layer)
  /// are appended here.
  std::vector<std::vector<double>>* attention_trace = nullptr;
};

template <typename T>
Tensor<T> maybe_dropout(const Tensor<T>& x, double p, const ForwardOptions& opt) {
  if (!opt.train || p <= 0.0 || !opt.rng) return x;
  return dropout(x, p, *opt.rng);
}

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParamSet<T>& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng)
      : weight_(ps.create(name + ".weight", in, out, Init::fan_in, rng)),
        bias_(ps.create(name + ".bias", 1, out, Init::zeros, rng)) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return add_bias(matmul(x, weight_), bias_); }
  const Tensor<T>& weight() const { return weight_; }
  const Tensor<T>& bias() const { return bias_; }
  std::size_t in_features() const { return weight_.rows(); }
  std::size_t out_features() const { return weight_.cols(); }

 private:
  Tensor<T> weight_;
  Tensor<T> bias_;
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamSet<T>& ps, const std::string& name, std::size_t dim, Rng& rng)
      : gamma_(ps.create(name + ".gamma", 1, dim, Init::ones, rng)), beta_(ps.create(name + ".beta", 1, dim, Init::zeros, rng)) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gamma_, beta_); }

 private:
  Tensor<T> gamma_;
  Tensor<T> beta_;
};

enum class Activation { gelu, leaky_relu };

/// Affine layers with an activation after every hidden layer.
template <typename T>
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamSet<T>& ps, const std::string& name, std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
      Activation act, Rng& rng)
      : act_(act) {
    std::size_t prev = in;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      layers_.emplace_back(ps, name + ".hidden" + std::to_string(i), prev, hidden[i], rng);
      prev = hidden[i];
    }
    layers_.emplace_back(ps, name + ".out", prev, out, rng);
  }

  Tensor<T> operator()(Tensor<T> x) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      x = layers_[i](x);
      if (i + 1 < layers_.size()) x = act_ == Activation::gelu ? gelu(x) : leaky_relu(x, T(0.01));
    }
    return x;
  }

  std::size_t out_features() const { return layers_.back().out_features(); }

 private:
  std::vector<Linear<T>> layers_;
  Activation act_ = Activation::gelu;
};

/// Additive L x L attention mask: -1e9 where a query may not look.
inline std::vector<double> attention_mask(std::size_t len, bool causal, const std::vector<bool>& key_padding = {}) {
  std::vector<double> m(len * len, 0.0);
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t j = 0; j < len; ++j) {
      if ((causal && j > i) || (!key_padding.empty() && key_padding[j] && j != i)) m[i * len + j] = -1e9;
    }
  }
  return m;
}

template <typename T>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParamSet<T>& ps, const std::string& name, std::size_t d_model, std::size_t n_heads, Rng& rng)
      : heads_(n_heads),
        q_(ps, name + ".query", d_model, d_model, rng),
        k_(ps, name + ".key", d_model, d_model, rng),
        v_(ps, name + ".value", d_model, d_model, rng),
        o_(ps, name + ".output", d_model, d_model, rng) {
    if (n_heads == 0 || d_model % n_heads != 0) throw Error(ErrorCode::ShapeMismatch, "d_model must be divisible by n_heads");
  }

  /// mask is empty or an additive L x L matrix.
  Tensor<T> operator()(const Tensor<T>& x, const std::vector<T>& mask, const ForwardOptions& opt = {}) const {
    const std::size_t len = x.rows(), d = x.cols(), dh = d / heads_;
    if (d != q_.in_features()) throw Error(ErrorCode::ShapeMismatch, "attention input width");
    if (!mask.empty() && mask.size() != len * len) throw Error(ErrorCode::ShapeMismatch, "attention mask shape");
    const Tensor<T> q = q_(x), k = k_(x), v = v_(x);
    const T inv = T(1) / std::sqrt(static_cast<T>(dh));
    std::vector<Tensor<T>> outs;
    outs.reserve(heads_);
    for (std::size_t h = 0; h < heads_; ++h) {
      const std::size_t b = h * dh, e = b + dh;
      Tensor<T> s = scale(matmul_nt(slice_cols(q, b, e), slice_cols(k, b, e)), inv);
      if (!mask.empty()) s = add_constant(s, std::span<const T>(mask));
      Tensor<T> p = softmax_rows(s);
      if (opt.attention_trace) opt.attention_trace->emplace_back(p.data().begin(), p.data().end());
      outs.push_back(matmul(p, slice_cols(v, b, e)));
    }
    return o_(heads_ == 1 ? outs.front() : concat_cols(outs));
  }

 private:
  std::size_t heads_ = 1;
  Linear<T> q_, k_, v_, o_;
};

/// Post-norm block: x = LN(x + Attn(x)); x = LN(x + FFN(x)).
template <typename T>
class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(ParamSet<T>& ps, const std::string& name, std::size_t d_model, std::size_t n_heads, std::size_t ffn_dim,
                   double dropout, Rng& rng)
      : attn_(ps, name + ".attention", d_model, n_heads, rng),
        ln1_(ps, name + ".norm1", d_model, rng),
        ff1_(ps, name + ".ffn1", d_model, ffn_dim, rng),
        ff2_(ps, name + ".ffn2", ffn_dim, d_model, rng),
        ln2_(ps, name + ".norm2", d_model, rng),
        dropout_(dropout) {}

  Tensor<T> operator()(const Tensor<T>& x, const std::vector<T>& mask, const ForwardOptions& opt) const {
    Tensor<T> a = maybe_dropout(attn_(x, mask, opt), dropout_, opt);
    Tensor<T> h = ln1_(add(x, a));
    Tensor<T> f = maybe_dropout(ff2_(gelu(ff1_(h))), dropout_, opt);
    return ln2_(add(h, f));
  }

 private:
  MultiHeadAttention<T> attn_;
  LayerNorm<T> ln1_;
  Linear<T> ff1_, ff2_;
  LayerNorm<T> ln2_;
  double dropout_ = 0.0;
};

template <typename T>
class TransformerStack {
 public:
  TransformerStack() = default;
  TransformerStack(ParamSet<T>& ps, const std::string& name, std::size_t n_layers, std::size_t d_model, std::size_t n_heads,
                   std::size_t ffn_dim, double dropout, Rng& rng) {
    for (std::size_t i = 0; i < n_layers; ++i) {
      layers_.emplace_back(ps, name + ".layer" + std::to_string(i), d_model, n_heads, ffn_dim, dropout, rng);
    }
  }

  Tensor<T> operator()(Tensor<T> x, const std::vector<T>& mask, const ForwardOptions& opt) const {
    for (const auto& l : layers_) x = l(x, mask, opt);
    return x;
  }

  std::size_t depth() const { return layers_.size(); }

 private:
  std::vector<TransformerLayer<T>> layers_;
};

template <typename T>
std::vector<T> cast_mask(const std::vector<double>& m) {
  return std::vector<T>(m.begin(), m.end());
}

}  // namespace trafficlm::nn
