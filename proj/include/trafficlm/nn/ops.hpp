#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "trafficlm/error.hpp"
#include "trafficlm/nn/tensor.hpp"
#include "trafficlm/rng.hpp"

namespace trafficlm::nn {

namespace detail {

inline void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
}

}  // namespace detail

/// A (m x k) times B (k x n).
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor<T> out = detail::make_result<T>(m, n, {a, b});
  const T* A = a.data().data();
  const T* B = b.data().data();
  T* C = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const T av = A[i * k + p];
      const T* brow = B + p * n;
      T* crow = C + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [m, k, n](Node<T>& self) {
      const T* G = self.grad.data();
      const T* A = self.parents[0]->value.data();
      const T* B = self.parents[1]->value.data();
      if (T* dA = detail::grad_of(self, 0)) {
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            T s = 0;
            for (std::size_t j = 0; j < n; ++j) s += G[i * n + j] * B[p * n + j];
            dA[i * k + p] += s;
          }
        }
      }
      if (T* dB = detail::grad_of(self, 1)) {
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            const T av = A[i * k + p];
            for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += av * G[i * n + j];
          }
        }
      }
    };
  }
  return out;
}

/// A (m x k) times B^T where B is (n x k).
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.cols() == b.cols(), "matmul_nt: inner dimensions differ");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor<T> out = detail::make_result<T>(m, n, {a, b});
  const T* A = a.data().data();
  const T* B = b.data().data();
  T* C = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T s = 0;
      for (std::size_t p = 0; p < k; ++p) s += A[i * k + p] * B[j * k + p];
      C[i * n + j] = s;
    }
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [m, k, n](Node<T>& self) {
      const T* G = self.grad.data();
      const T* A = self.parents[0]->value.data();
      const T* B = self.parents[1]->value.data();
      T* dA = detail::grad_of(self, 0);
      T* dB = detail::grad_of(self, 1);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const T g = G[i * n + j];
          if (g == T(0)) continue;
          if (dA) {
            for (std::size_t p = 0; p < k; ++p) dA[i * k + p] += g * B[j * k + p];
          }
          if (dB) {
            for (std::size_t p = 0; p < k; ++p) dB[j * k + p] += g * A[i * k + p];
          }
        }
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.shape() == b.shape(), "add: shapes differ");
  Tensor<T> out = detail::make_result<T>(a.rows(), a.cols(), {a, b});
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (out.requires_grad()) {
    out.node()->backward_fn = [](Node<T>& self) {
      for (std::size_t p = 0; p < 2; ++p) {
        if (T* d = detail::grad_of(self, p)) {
          for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i];
        }
      }
    };
  }
  return out;
}

/// Adds a 1 x n row to every row of A.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& a, const Tensor<T>& bias) {
  detail::require(bias.rows() == 1 && bias.cols() == a.cols(), "add_bias: bias must be 1 x cols");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor<T> out = detail::make_result<T>(m, n, {a, bias});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out.data()[i * n + j] = a.data()[i * n + j] + bias.data()[j];
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [m, n](Node<T>& self) {
      if (T* d = detail::grad_of(self, 0)) {
        for (std::size_t i = 0; i < m * n; ++i) d[i] += self.grad[i];
      }
      if (T* d = detail::grad_of(self, 1)) {
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) d[j] += self.grad[i * n + j];
        }
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  Tensor<T> out = detail::make_result<T>(a.rows(), a.cols(), {a});
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * factor;
  if (out.requires_grad()) {
    out.node()->backward_fn = [factor](Node<T>& self) {
      T* d = detail::grad_of(self, 0);
      for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i] * factor;
    };
  }
  return out;
}

/// A plus a constant (non-differentiable) matrix of the same shape, e.g. an
/// additive attention mask.
template <typename T>
Tensor<T> add_constant(const Tensor<T>& a, std::span<const T> c) {
  detail::require(c.size() == a.size(), "add_constant: size differs");
  Tensor<T> out = detail::make_result<T>(a.rows(), a.cols(), {a});
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + c[i];
  if (out.requires_grad()) {
    out.node()->backward_fn = [](Node<T>& self) {
      T* d = detail::grad_of(self, 0);
      for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i];
    };
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  Tensor<T> out = detail::make_result<T>(1, 1, {a});
  T s = 0;
  for (T v : a.data()) s += v;
  out.data()[0] = s;
  if (out.requires_grad()) {
    out.node()->backward_fn = [](Node<T>& self) {
      T* d = detail::grad_of(self, 0);
      const std::size_t n = self.parents[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) d[i] += self.grad[0];
    };
  }
  return out;
}

/// Row-wise softmax, shifted by the row maximum.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
  const std::size_t m = a.rows(), n = a.cols();
  detail::require(n > 0, "softmax over an empty row");
  Tensor<T> out = detail::make_result<T>(m, n, {a});
  for (std::size_t i = 0; i < m; ++i) {
    const T* x = a.data().data() + i * n;
    T* y = out.data().data() + i * n;
    const T mx = *std::max_element(x, x + n);
    T z = 0;
    for (std::size_t j = 0; j < n; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < n; ++j) y[j] /= z;
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [m, n](Node<T>& self) {
      T* d = detail::grad_of(self, 0);
      for (std::size_t i = 0; i < m; ++i) {
        const T* y = self.value.data() + i * n;
        const T* g = self.grad.data() + i * n;
        T dot = 0;
        for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
        for (std::size_t j = 0; j < n; ++j) d[i * n + j] += y[j] * (g[j] - dot);
      }
    };
  }
  return out;
}

/// Per-row normalization with learned gain and shift (both 1 x n). The eps
/// guard keeps constant rows finite.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& a, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5)) {
  const std::size_t m = a.rows(), n = a.cols();
  detail::require(gamma.rows() == 1 && gamma.cols() == n && beta.rows() == 1 && beta.cols() == n,
                  "layer_norm: gain/shift must be 1 x cols");
  Tensor<T> out = detail::make_result<T>(m, n, {a, gamma, beta});
  std::vector<T> xhat(m * n), inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const T* x = a.data().data() + i * n;
    T mean = 0;
    for (std::size_t j = 0; j < n; ++j) mean += x[j];
    mean /= static_cast<T>(n);
    T var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= static_cast<T>(n);
    inv_std[i] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (x[j] - mean) * inv_std[i];
      out.data()[i * n + j] = gamma.data()[j] * xhat[i * n + j] + beta.data()[j];
    }
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
      const T* g = self.grad.data();
      const T* gam = self.parents[1]->value.data();
      T* dx = detail::grad_of(self, 0);
      T* dgam = detail::grad_of(self, 1);
      T* dbeta = detail::grad_of(self, 2);
      std::vector<T> dxhat(n);
      for (std::size_t i = 0; i < m; ++i) {
        T mean_d = 0, mean_dx = 0;
        for (std::size_t j = 0; j < n; ++j) {
          const T gij = g[i * n + j];
          if (dgam) dgam[j] += gij * xhat[i * n + j];
          if (dbeta) dbeta[j] += gij;
          dxhat[j] = gij * gam[j];
          mean_d += dxhat[j];
          mean_dx += dxhat[j] * xhat[i * n + j];
        }
        if (!dx) continue;
        mean_d /= static_cast<T>(n);
        mean_dx /= static_cast<T>(n);
        for (std::size_t j = 0; j < n; ++j) {
          dx[i * n + j] += inv_std[i] * (dxhat[j] - mean_d - xhat[i * n + j] * mean_dx);
        }
      }
    };
  }
  return out;
}

/// Exact GELU, x * Phi(x).
template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  Tensor<T> out = detail::make_result<T>(a.rows(), a.cols(), {a});
  const T r2 = T(1) / std::sqrt(T(2));
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T x = a.data()[i];
    out.data()[i] = x * T(0.5) * (T(1) + std::erf(x * r2));
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [r2](Node<T>& self) {
      T* d = detail::grad_of(self, 0);
      const T* xs = self.parents[0]->value.data();
      const T c = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const T x = xs[i];
        const T cdf = T(0.5) * (T(1) + std::erf(x * r2));
        const T pdf = c * std::exp(T(-0.5) * x * x);
        d[i] += self.grad[i] * (cdf + x * pdf);
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope = T(0.01)) {
  Tensor<T> out = detail::make_result<T>(a.rows(), a.cols(), {a});
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T x = a.data()[i];
    out.data()[i] = x > 0 ? x : slope * x;
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [slope](Node<T>& self) {
      T* d = detail::grad_of(self, 0);
      const T* xs = self.parents[0]->value.data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i] * (xs[i] > 0 ? T(1) : slope);
    };
  }
  return out;
}

/// Rows of table selected by ids.
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::uint32_t> ids) {
  const std::size_t n = table.cols();
  for (auto id : ids) {
    if (id >= table.rows()) {
      throw Error(ErrorCode::IdOutOfRange, "id " + std::to_string(id) + " >= table size " + std::to_string(table.rows()));
    }
  }
  Tensor<T> out = detail::make_result<T>(ids.size(), n, {table});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(table.data().data() + ids[i] * n, n, out.data().data() + i * n);
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [n, ids = std::vector<std::uint32_t>(ids.begin(), ids.end())](Node<T>& self) {
      T* d = detail::grad_of(self, 0);
      for (std::size_t i = 0; i < ids.size(); ++i) {
        for (std::size_t j = 0; j < n; ++j) d[ids[i] * n + j] += self.grad[i * n + j];
      }
    };
  }
  return out;
}

/// Row i of the result is row indices[i] of A.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& a, std::span<const std::size_t> indices) {
  const std::size_t n = a.cols();
  for (auto r : indices) detail::require(r < a.rows(), "gather_rows: index out of range");
  Tensor<T> out = detail::make_result<T>(indices.size(), n, {a});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(a.data().data() + indices[i] * n, n, out.data().data() + i * n);
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [n, idx = std::vector<std::size_t>(indices.begin(), indices.end())](Node<T>& self) {
      T* d = detail::grad_of(self, 0);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < n; ++j) d[idx[i] * n + j] += self.grad[i * n + j];
      }
    };
  }
  return out;
}

/// total x n matrix whose rows at `indices` come from `rows` (in order) and
/// whose other rows are copies of the 1 x n `fill` row.
template <typename T>
Tensor<T> scatter_rows(const Tensor<T>& rows, const Tensor<T>& fill, std::span<const std::size_t> indices, std::size_t total) {
  const std::size_t n = fill.cols();
  detail::require(fill.rows() == 1 && rows.cols() == n && rows.rows() == indices.size(), "scatter_rows: shapes");
  std::vector<std::int64_t> source(total, -1);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    detail::require(indices[i] < total && source[indices[i]] < 0, "scatter_rows: bad index");
    source[indices[i]] = static_cast<std::int64_t>(i);
  }
  Tensor<T> out = detail::make_result<T>(total, n, {rows, fill});
  for (std::size_t r = 0; r < total; ++r) {
    const T* src = source[r] < 0 ? fill.data().data() : rows.data().data() + static_cast<std::size_t>(source[r]) * n;
    std::copy_n(src, n, out.data().data() + r * n);
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [n, total, source = std::move(source)](Node<T>& self) {
      T* dr = detail::grad_of(self, 0);
      T* df = detail::grad_of(self, 1);
      for (std::size_t r = 0; r < total; ++r) {
        T* d = source[r] < 0 ? df : (dr ? dr + static_cast<std::size_t>(source[r]) * n : nullptr);
        if (!d) continue;
        for (std::size_t j = 0; j < n; ++j) d[j] += self.grad[r * n + j];
      }
    };
  }
  return out;
}

/// Columns [begin, end) of A.
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t end) {
  detail::require(begin <= end && end <= a.cols(), "slice_cols: range");
  const std::size_t m = a.rows(), n = a.cols(), w = end - begin;
  Tensor<T> out = detail::make_result<T>(m, w, {a});
  for (std::size_t i = 0; i < m; ++i) std::copy_n(a.data().data() + i * n + begin, w, out.data().data() + i * w);
  if (out.requires_grad()) {
    out.node()->backward_fn = [m, n, w, begin](Node<T>& self) {
      T* d = detail::grad_of(self, 0);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < w; ++j) d[i * n + begin + j] += self.grad[i * w + j];
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  detail::require(!parts.empty(), "concat_cols: nothing to join");
  const std::size_t m = parts.front().rows();
  std::size_t n = 0;
  for (const auto& p : parts) {
    detail::require(p.rows() == m, "concat_cols: row counts differ");
    n += p.cols();
  }
  Tensor<T> out = detail::make_result<T>(m, n, parts);
  std::size_t off = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < m; ++i) std::copy_n(p.data().data() + i * p.cols(), p.cols(), out.data().data() + i * n + off);
    off += p.cols();
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [m, n](Node<T>& self) {
      std::size_t off = 0;
      for (std::size_t k = 0; k < self.parents.size(); ++k) {
        const std::size_t w = self.parents[k]->cols;
        if (T* d = detail::grad_of(self, k)) {
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < w; ++j) d[i * w + j] += self.grad[i * n + off + j];
          }
        }
        off += w;
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  detail::require(!parts.empty(), "concat_rows: nothing to join");
  const std::size_t n = parts.front().cols();
  std::size_t m = 0;
  for (const auto& p : parts) {
    detail::require(p.cols() == n, "concat_rows: column counts differ");
    m += p.rows();
  }
  Tensor<T> out = detail::make_result<T>(m, n, parts);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
    off += p.size();
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [](Node<T>& self) {
      std::size_t off = 0;
      for (std::size_t k = 0; k < self.parents.size(); ++k) {
        const std::size_t sz = self.parents[k]->value.size();
        if (T* d = detail::grad_of(self, k)) {
          for (std::size_t i = 0; i < sz; ++i) d[i] += self.grad[off + i];
        }
        off += sz;
      }
    };
  }
  return out;
}

/// 1 x n mean over the rows of A.
template <typename T>
Tensor<T> mean_rows(const Tensor<T>& a) {
  const std::size_t m = a.rows(), n = a.cols();
  detail::require(m > 0, "mean_rows: no rows");
  Tensor<T> out = detail::make_result<T>(1, n, {a});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out.data()[j] += a.data()[i * n + j];
  }
  for (auto& v : out.data()) v /= static_cast<T>(m);
  if (out.requires_grad()) {
    out.node()->backward_fn = [m, n](Node<T>& self) {
      T* d = detail::grad_of(self, 0);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) d[i * n + j] += self.grad[j] / static_cast<T>(m);
      }
    };
  }
  return out;
}

/// Inverted dropout: kept entries are scaled by 1/(1-p).
template <typename T>
Tensor<T> dropout(const Tensor<T>& a, double p, Rng& rng) {
  if (p <= 0.0) return a;
  if (p >= 1.0) throw Error(ErrorCode::InvalidArgument, "dropout rate must be < 1");
  std::vector<T> keep(a.size());
  const T s = T(1) / static_cast<T>(1.0 - p);
  for (auto& k : keep) k = rng.uniform() < p ? T(0) : s;
  Tensor<T> out = detail::make_result<T>(a.rows(), a.cols(), {a});
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * keep[i];
  if (out.requires_grad()) {
    out.node()->backward_fn = [keep = std::move(keep)](Node<T>& self) {
      T* d = detail::grad_of(self, 0);
      for (std::size_t i = 0; i < keep.size(); ++i) d[i] += self.grad[i] * keep[i];
    };
  }
  return out;
}

inline constexpr std::int64_t kIgnoreTarget = -1;

/// Mean negative log-likelihood of targets under softmax(logits), over the
/// rows whose target is not kIgnoreTarget.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int64_t> targets) {
  const std::size_t m = logits.rows(), n = logits.cols();
  detail::require(targets.size() == m, "cross_entropy: one target per row");
  std::size_t valid = 0;
  for (auto t : targets) {
    if (t == kIgnoreTarget) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= n) throw Error(ErrorCode::IdOutOfRange, "cross_entropy: target class");
    ++valid;
  }
  if (valid == 0) throw Error(ErrorCode::NothingToMask, "cross_entropy: every target is ignored");
  std::vector<T> probs(m * n, T(0));
  T loss = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (targets[i] == kIgnoreTarget) continue;
    const T* x = logits.data().data() + i * n;
    const T mx = *std::max_element(x, x + n);
    T z = 0;
    for (std::size_t j = 0; j < n; ++j) z += (probs[i * n + j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < n; ++j) probs[i * n + j] /= z;
    loss += -(x[static_cast<std::size_t>(targets[i])] - mx - std::log(z));
  }
  Tensor<T> out = detail::make_result<T>(1, 1, {logits});
  out.data()[0] = loss / static_cast<T>(valid);
  if (out.requires_grad()) {
    out.node()->backward_fn = [m, n, valid, probs = std::move(probs),
                               tg = std::vector<std::int64_t>(targets.begin(), targets.end())](Node<T>& self) {
      T* d = detail::grad_of(self, 0);
      const T g = self.grad[0] / static_cast<T>(valid);
      for (std::size_t i = 0; i < m; ++i) {
        if (tg[i] == kIgnoreTarget) continue;
        for (std::size_t j = 0; j < n; ++j) {
          d[i * n + j] += g * (probs[i * n + j] - (static_cast<std::int64_t>(j) == tg[i] ? T(1) : T(0)));
        }
      }
    };
  }
  return out;
}

/// Mean squared difference between pred and a constant target.
template <typename T>
Tensor<T> mse(const Tensor<T>& pred, std::span<const T> target) {
  detail::require(pred.size() == target.size(), "mse: size differs");
  detail::require(pred.size() > 0, "mse: empty");
  Tensor<T> out = detail::make_result<T>(1, 1, {pred});
  T s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T e = pred.data()[i] - target[i];
    s += e * e;
  }
  out.data()[0] = s / static_cast<T>(pred.size());
  if (out.requires_grad()) {
    out.node()->backward_fn = [tgt = std::vector<T>(target.begin(), target.end())](Node<T>& self) {
      T* d = detail::grad_of(self, 0);
      const T* p = self.parents[0]->value.data();
      const T c = T(2) * self.grad[0] / static_cast<T>(tgt.size());
      for (std::size_t i = 0; i < tgt.size(); ++i) d[i] += c * (p[i] - tgt[i]);
    };
  }
  return out;
}

/// Plain (non-differentiable) row softmax of a value buffer.
template <typename T>
std::vector<T> softmax_values(std::span<const T> x) {
  std::vector<T> y(x.size());
  if (x.empty()) return y;
  const T mx = *std::max_element(x.begin(), x.end());
  T z = 0;
  for (std::size_t j = 0; j < x.size(); ++j) z += (y[j] = std::exp(x[j] - mx));
  for (auto& v : y) v /= z;
  return y;
}

}  // namespace trafficlm::nn
