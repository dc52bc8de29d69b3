#pragma once

// Finite-difference checks of every differentiable op and of the model
// losses, shared by the unit tests, the acceptance binary and `selftest`.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "trafficlm/nn/grad_check.hpp"
#include "trafficlm/nn/model.hpp"
#include "trafficlm/nn/ops.hpp"
#include "trafficlm/pretrain.hpp"
#include "trafficlm/rng.hpp"
#include "trafficlm/testing/oracles.hpp"

namespace trafficlm::testing {

struct GradCase {
  std::string name;
  nn::GradCheckResult result;
  /// Independent route: every coordinate through oracle::numeric_gradient.
  /// Negative when not computed (model-level cases).
  double oracle_error = -1.0;

  double worst() const { return std::max(result.finite ? result.max_rel_error : INFINITY, oracle_error); }
};

namespace detail {

using T = double;
using nn::Tensor;

inline Tensor<T> random_param(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<T> v(r * c);
  for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
  return Tensor<T>::parameter(r, c, v);
}

inline Tensor<T> random_const(std::size_t r, std::size_t c, Rng& rng) {
  std::vector<T> v(r * c);
  for (auto& x : v) x = rng.uniform() * 2 - 1;
  return Tensor<T>::constant(r, c, v);
}

/// sum(out * W) for a fixed random W, so every output entry carries its
/// own weight in the loss.
inline Tensor<T> weighted(const Tensor<T>& out, std::uint64_t seed) {
  Rng rng(seed);
  auto w = random_const(out.cols(), 1, rng);
  auto w2 = random_const(1, out.rows(), rng);
  return nn::sum(nn::matmul(w2, nn::matmul(out, w)));
}

inline double oracle_route(const std::function<Tensor<T>()>& loss, std::vector<Tensor<T>> inputs, double floor) {
  for (auto& t : inputs) t.zero_grad();
  loss().backward();
  std::vector<double> analytic, x;
  for (auto& t : inputs) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      analytic.push_back(t.grad().empty() ? 0.0 : t.grad()[i]);
      x.push_back(t.data()[i]);
    }
  }
  auto f = [&](const std::vector<double>& v) {
    std::size_t k = 0;
    for (auto& t : inputs) {
      for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = v[k++];
    }
    return static_cast<double>(loss().item());
  };
  const auto numeric = oracle::numeric_gradient(f, x);
  f(x);
  return oracle::max_relative_error(analytic, numeric, floor);
}

}  // namespace detail

inline std::vector<GradCase> op_gradient_checks(std::uint64_t seed = 1, const nn::GradCheckOptions& opt = {}) {
  using namespace detail;
  Rng rng(seed);
  std::vector<GradCase> out;
  auto check = [&](const std::string& name, std::function<Tensor<T>()> loss, std::vector<Tensor<T>> inputs) {
    out.push_back({name, nn::grad_check<T>(loss, inputs, opt), oracle_route(loss, inputs, opt.floor)});
  };

  auto a = random_param(3, 4, rng), b = random_param(4, 5, rng), c = random_param(5, 4, rng);
  auto same = random_param(3, 4, rng), bias = random_param(1, 4, rng);
  check("matmul", [=] { return weighted(nn::matmul(a, b), 1); }, {a, b});
  check("matmul_nt", [=] { return weighted(nn::matmul_nt(a, c), 2); }, {a, c});
  check("add", [=] { return weighted(nn::add(a, same), 3); }, {a, same});
  check("add_bias", [=] { return weighted(nn::add_bias(a, bias), 4); }, {a, bias});
  check("scale", [=] { return weighted(nn::scale(a, 1.7), 5); }, {a});
  std::vector<T> mask(12);
  for (auto& m : mask) m = rng.uniform();
  check("add_constant", [=] { return weighted(nn::add_constant(a, std::span<const T>(mask)), 6); }, {a});
  check("sum", [=] { return nn::scale(nn::sum(a), 0.5); }, {a});
  check("softmax_rows", [=] { return weighted(nn::softmax_rows(a), 7); }, {a});
  auto gamma = random_param(1, 4, rng, 0.5, 1.5), beta = random_param(1, 4, rng);
  check("layer_norm", [=] { return weighted(nn::layer_norm(a, gamma, beta), 8); }, {a, gamma, beta});
  check("gelu", [=] { return weighted(nn::gelu(a), 9); }, {a});
  check("leaky_relu", [=] { return weighted(nn::leaky_relu(a), 10); }, {a});
  auto table = random_param(6, 4, rng);
  const std::vector<std::uint32_t> ids{5, 0, 3, 3};
  check("embedding", [=] { return weighted(nn::embedding(table, std::span<const std::uint32_t>(ids)), 11); }, {table});
  const std::vector<std::size_t> rows{2, 0, 2};
  check("gather_rows", [=] { return weighted(nn::gather_rows(a, std::span<const std::size_t>(rows)), 12); }, {a});
  auto fill = random_param(1, 4, rng);
  const std::vector<std::size_t> at{4, 1, 2};
  check("scatter_rows", [=] { return weighted(nn::scatter_rows(a, fill, std::span<const std::size_t>(at), 6), 13); }, {a, fill});
  check("slice_cols", [=] { return weighted(nn::slice_cols(a, 1, 3), 14); }, {a});
  check("concat_cols", [=] { return weighted(nn::concat_cols<T>({a, same, a}), 15); }, {a, same});
  check("concat_rows", [=] { return weighted(nn::concat_rows<T>({a, same}), 16); }, {a, same});
  check("mean_rows", [=] { return weighted(nn::mean_rows(a), 17); }, {a});
  check("dropout", [=] {
    Rng r(99);
    return weighted(nn::dropout(a, 0.3, r), 18);
  }, {a});
  auto logits = random_param(4, 5, rng, -2, 2);
  const std::vector<std::int64_t> targets{1, nn::kIgnoreTarget, 4, 0};
  check("cross_entropy", [=] { return nn::cross_entropy(logits, std::span<const std::int64_t>(targets)); }, {logits});
  std::vector<T> goal(12);
  for (auto& g : goal) g = rng.uniform();
  check("mse", [=] { return nn::mse(a, std::span<const T>(goal)); }, {a});
  return out;
}

inline std::vector<nn::Tensor<double>> parameter_tensors(nn::ParamSet<double>& ps) {
  std::vector<nn::Tensor<double>> t;
  for (const auto& e : ps.entries()) t.push_back(e.tensor);
  return t;
}

/// Full-model losses on a 2-layer toy configuration (dropout off).
inline std::vector<GradCase> model_gradient_checks(std::uint64_t seed = 1, const nn::GradCheckOptions& opt = {}) {
  std::vector<GradCase> out;
  Rng rng(seed);
  nn::ModelConfig enc;
  enc.d_model = 8;
  enc.n_heads = 2;
  enc.n_layers = 2;
  enc.ffn_dim = 16;
  enc.max_len = 16;
  enc.vocab_size = 60;
  enc.patch_dim = 4;
  enc.mae_decoder_layers = 1;

  {
    nn::TrafficModel<double> m(enc, seed);
    MaskedSequence ms;
    ms.input = {special::cls, 50, special::mask, 52, special::pkt, special::mask, 55, special::sep};
    ms.segments.assign(ms.input.size(), 0);
    ms.targets.assign(ms.input.size(), nn::kIgnoreTarget);
    ms.targets[2] = 51;
    ms.targets[5] = 54;
    ms.positions = {2, 5};
    out.push_back({"encoder masked-token loss",
                   nn::grad_check<double>([&] { return masked_token_loss(m, ms); }, parameter_tensors(m.params()), opt)});
  }
  {
    nn::TrafficModel<double> m(enc, seed);
    MaeExample ex;
    ex.total = 6;
    ex.patch_dim = 4;
    ex.visible_index = {0, 3};
    ex.mask_index = {1, 2, 4, 5};
    for (std::size_t i = 0; i < 8; ++i) ex.visible.push_back(rng.uniform());
    for (std::size_t i = 0; i < 16; ++i) ex.target.push_back(rng.uniform());
    out.push_back({"encoder masked-patch loss",
                   nn::grad_check<double>([&] { return mae_reconstruction_loss(mae_forward(m, ex), ex); }, parameter_tensors(m.params()), opt)});
  }
  {
    nn::ModelConfig cc = enc;
    cc.mae_decoder_layers = 0;
    cc.head_hidden = {8, 6, 4};
    nn::TrafficModel<double> m(cc, seed);
    m.attach_task(nn::TaskKind::classify, 3);
    const std::vector<TokenId> ids{special::cls, 49, 50, 51, special::sep};
    const std::int64_t y = 2;
    out.push_back({"encoder classifier loss", nn::grad_check<double>([&] {
                     return nn::cross_entropy(m.task_output(m.pool(m.encode_tokens(ids), true)), std::span<const std::int64_t>(&y, 1));
                   }, parameter_tensors(m.params()), opt)});
  }
  {
    nn::ModelConfig dc = enc;
    dc.mode = nn::ModelMode::decoder;
    dc.patch_dim = 0;
    dc.mae_decoder_layers = 0;
    nn::TrafficModel<double> m(dc, seed);
    const auto ex = next_token_example(std::vector<TokenId>{special::bos, special::label(1), 20, 50, 51, 52, special::eos});
    out.push_back({"decoder next-token loss",
                   nn::grad_check<double>([&] { return next_token_loss(m, ex); }, parameter_tensors(m.params()), opt)});
  }
  return out;
}

}  // namespace trafficlm::testing
