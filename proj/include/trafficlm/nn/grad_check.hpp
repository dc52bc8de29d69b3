#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "trafficlm/nn/tensor.hpp"
#include "trafficlm/rng.hpp"

namespace trafficlm::nn {

struct GradCheckOptions {
  std::size_t samples = 200;  // coordinates checked; all of them if fewer exist
  double step = 1e-5;
  /// Lower bound on the denominator of the relative error, so coordinates
  /// with vanishing gradients are judged on absolute error.
  double floor = 1e-3;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  bool finite = true;
};

/// Compares the analytic gradient of loss() with respect to `inputs` against
/// central finite differences on a random subset of coordinates.
/// rel = |a - n| / max(|a|, |n|, floor). loss must be deterministic and
/// rebuild its graph on every call.
template <typename T>
GradCheckResult grad_check(const std::function<Tensor<T>()>& loss, std::vector<Tensor<T>> inputs,
                           const GradCheckOptions& opt = {}) {
  for (auto& t : inputs) t.zero_grad();
  loss().backward();

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) coords.push_back({k, i});
  }
  if (coords.size() > opt.samples) {
    Rng rng(opt.seed);
    auto pick = rng.sample(coords.size(), opt.samples);
    std::sort(pick.begin(), pick.end());
    std::vector<std::pair<std::size_t, std::size_t>> chosen;
    for (auto i : pick) chosen.push_back(coords[i]);
    coords = std::move(chosen);
  }

  GradCheckResult res;
  const T h = static_cast<T>(opt.step);
  for (auto [k, i] : coords) {
    Tensor<T>& t = inputs[k];
    const T analytic = t.grad().empty() ? T(0) : t.grad()[i];
    const T saved = t.data()[i];
    t.data()[i] = saved + h;
    const T plus = loss().item();
    t.data()[i] = saved - h;
    const T minus = loss().item();
    t.data()[i] = saved;
    const double numeric = (static_cast<double>(plus) - static_cast<double>(minus)) / (2.0 * opt.step);
    const double a = static_cast<double>(analytic);
    double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opt.floor});
    if (!std::isfinite(a) || !std::isfinite(numeric)) {
      res.finite = false;
      rel = INFINITY;
    }
    res.max_rel_error = std::max(res.max_rel_error, rel);
    ++res.checked;
  }
  return res;
}

}  // namespace trafficlm::nn
