#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "trafficlm/error.hpp"
#include "trafficlm/nn/layers.hpp"

namespace trafficlm::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t warmup_steps = 100;
  double clip_norm = 1.0;  // <= 0 disables clipping
};

/// Adam with linear warm-up to a constant rate and global-norm clipping.
/// Parameters with requires_grad unset are skipped entirely.
template <typename T>
class Adam {
 public:
  Adam(ParamSet<T>& params, AdamConfig config) : params_(&params), config_(config) {
    for (const auto& e : params.entries()) {
      m_.emplace_back(e.tensor.size(), T(0));
      v_.emplace_back(e.tensor.size(), T(0));
    }
  }

  /// Learning rate used by the next step.
  double next_lr() const {
    const double t = static_cast<double>(t_ + 1);
    if (config_.warmup_steps == 0) return config_.lr;
    return config_.lr * std::min(1.0, t / static_cast<double>(config_.warmup_steps));
  }

  /// Applies one update from the accumulated gradients and clears them.
  /// Returns the global gradient norm before clipping.
  double step() {
    const auto& entries = params_->entries();
    double sq = 0;
    for (const auto& e : entries) {
      if (!e.tensor.requires_grad()) continue;
      for (T g : e.tensor.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    const double norm = std::sqrt(sq);
    const double clip = (config_.clip_norm > 0 && norm > config_.clip_norm) ? config_.clip_norm / norm : 1.0;
    const double lr = next_lr();
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < entries.size(); ++k) {
      Tensor<T> p = entries[k].tensor;
      if (!p.requires_grad()) continue;
      auto g = p.grad();
      if (g.empty()) continue;
      auto w = p.data();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = static_cast<double>(g[i]) * clip;
        m[i] = static_cast<T>(config_.beta1 * m[i] + (1 - config_.beta1) * gi);
        v[i] = static_cast<T>(config_.beta2 * v[i] + (1 - config_.beta2) * gi * gi);
        const double mh = m[i] / bc1, vh = v[i] / bc2;
        w[i] = static_cast<T>(w[i] - lr * mh / (std::sqrt(vh) + config_.eps));
      }
      p.zero_grad();
    }
    return norm;
  }

  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }

  void restore(std::uint64_t t, std::vector<std::vector<T>> m, std::vector<std::vector<T>> v) {
    if (m.size() != m_.size() || v.size() != v_.size()) throw Error(ErrorCode::ShapeMismatch, "moment table size");
    for (std::size_t k = 0; k < m.size(); ++k) {
      if (m[k].size() != m_[k].size() || v[k].size() != v_[k].size()) throw Error(ErrorCode::ShapeMismatch, "moment shape");
    }
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
  }

 private:
  ParamSet<T>* params_;
  AdamConfig config_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

}  // namespace trafficlm::nn
