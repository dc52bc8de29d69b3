#pragma once

// Brute-force reference implementations used by the test suites and the
// selftest command. Each one recomputes a result the slow, obvious way and
// shares no code with the implementation it checks.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace trafficlm::oracle {

// ---------------------------------------------------------------------------
// BPE

struct BpeResult {
  std::vector<std::pair<std::string, std::string>> merges;
  std::set<std::string> units;  // every unit string in the final vocabulary
};

inline std::string hex_byte(unsigned b) {
  static const char* digits = "0123456789abcdef";
  return {digits[b >> 4], digits[b & 15]};
}

/// Base alphabet: 48 reserved names, 256 two-char unigrams and the observed
/// four-char bigrams, keeping the (vocab_size - 304) most frequent when they
/// do not all fit (ties by string).
inline std::set<std::string> bpe_base(const std::vector<std::vector<std::string>>& corpus, std::size_t vocab_size) {
  std::set<std::string> units;
  for (int i = 0; i < 48; ++i) units.insert("#" + std::to_string(i));
  for (unsigned b = 0; b < 256; ++b) units.insert(hex_byte(b));
  std::map<std::string, std::size_t> counts;
  for (const auto& seq : corpus) {
    for (const auto& u : seq) {
      if (u.size() == 4) ++counts[u];
    }
  }
  std::vector<std::pair<std::size_t, std::string>> ranked;
  for (const auto& [u, c] : counts) ranked.push_back({c, u});
  std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
    return x.first != y.first ? x.first > y.first : x.second < y.second;
  });
  const std::size_t budget = vocab_size >= 304 ? vocab_size - 304 : 0;
  for (std::size_t i = 0; i < std::min(budget, ranked.size()); ++i) units.insert(ranked[i].second);
  return units;
}

/// Recounts every adjacent pair from scratch before each merge.
inline BpeResult bpe(std::vector<std::vector<std::string>> corpus, std::size_t vocab_size) {
  BpeResult r;
  r.units = bpe_base(corpus, vocab_size);
  // Bigrams that did not make the base alphabet are split into unigrams.
  for (auto& seq : corpus) {
    std::vector<std::string> split;
    for (const auto& u : seq) {
      if (r.units.count(u)) {
        split.push_back(u);
      } else {
        split.push_back(u.substr(0, 2));
        split.push_back(u.substr(2, 2));
      }
    }
    seq = std::move(split);
  }
  while (r.units.size() < vocab_size) {
    std::map<std::pair<std::string, std::string>, std::size_t> counts;
    for (const auto& seq : corpus) {
      for (std::size_t i = 0; i + 1 < seq.size(); ++i) ++counts[{seq[i], seq[i + 1]}];
    }
    const std::pair<std::string, std::string>* best = nullptr;
    std::size_t best_count = 0;
    for (const auto& [p, c] : counts) {
      if (!best || c > best_count || (c == best_count && (p.first + p.second < best->first + best->second ||
                                                          (p.first + p.second == best->first + best->second && p.first < best->first)))) {
        best = &p;
        best_count = c;
      }
    }
    if (!best || best_count < 2) break;
    const auto pair = *best;
    r.merges.push_back(pair);
    r.units.insert(pair.first + pair.second);
    for (auto& seq : corpus) {
      std::vector<std::string> out;
      for (std::size_t i = 0; i < seq.size(); ++i) {
        if (i + 1 < seq.size() && seq[i] == pair.first && seq[i + 1] == pair.second) {
          out.push_back(pair.first + pair.second);
          ++i;
        } else {
          out.push_back(seq[i]);
        }
      }
      seq = std::move(out);
    }
  }
  return r;
}

/// Repeatedly applies the best-ranked merge present anywhere in the sequence,
/// left to right, until none applies.
inline std::vector<std::string> bpe_apply(std::vector<std::string> seq, const std::set<std::string>& base,
                                          const std::vector<std::pair<std::string, std::string>>& merges) {
  std::vector<std::string> split;
  for (const auto& u : seq) {
    if (base.count(u)) {
      split.push_back(u);
    } else {
      split.push_back(u.substr(0, 2));
      split.push_back(u.substr(2, 2));
    }
  }
  seq = std::move(split);
  for (;;) {
    std::size_t best = merges.size();
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
      for (std::size_t r = 0; r < best; ++r) {
        if (merges[r].first == seq[i] && merges[r].second == seq[i + 1]) {
          best = r;
          break;
        }
      }
    }
    if (best == merges.size()) break;
    const auto& [a, b] = merges[best];
    std::vector<std::string> out;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (i + 1 < seq.size() && seq[i] == a && seq[i + 1] == b) {
        out.push_back(a + b);
        ++i;
      } else {
        out.push_back(seq[i]);
      }
    }
    seq = std::move(out);
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Metrics

struct ClassCounts {
  double precision = 0, recall = 0, f1 = 0;
};

/// Per-class metrics read off a full confusion matrix.
inline std::vector<ClassCounts> confusion_metrics(const std::vector<int>& pred, const std::vector<int>& truth, int n_classes,
                                                  double* accuracy = nullptr) {
  std::vector<std::vector<long>> cm(n_classes, std::vector<long>(n_classes, 0));
  for (std::size_t i = 0; i < pred.size(); ++i) ++cm[truth[i]][pred[i]];
  std::vector<ClassCounts> out(n_classes);
  long diag = 0;
  for (int c = 0; c < n_classes; ++c) {
    long col = 0, row = 0;
    for (int k = 0; k < n_classes; ++k) {
      col += cm[k][c];
      row += cm[c][k];
    }
    diag += cm[c][c];
    auto& m = out[c];
    m.precision = col ? double(cm[c][c]) / col : 0.0;
    m.recall = row ? double(cm[c][c]) / row : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  }
  if (accuracy) *accuracy = pred.empty() ? 0.0 : double(diag) / pred.size();
  return out;
}

/// Largest ECDF gap, evaluating both ECDFs at every sample point by counting.
inline double ks(const std::vector<double>& a, const std::vector<double>& b) {
  double best = 0;
  auto ecdf = [](const std::vector<double>& s, double x) {
    return double(std::count_if(s.begin(), s.end(), [x](double v) { return v <= x; })) / s.size();
  };
  for (const auto* s : {&a, &b}) {
    for (double x : *s) best = std::max(best, std::abs(ecdf(a, x) - ecdf(b, x)));
  }
  return best;
}

/// Fraction of (positive, negative) pairs ranked correctly, ties half.
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double won = 0;
  long pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      won += scores[i] > scores[j] ? 1.0 : (scores[i] == scores[j] ? 0.5 : 0.0);
    }
  }
  return pairs ? won / pairs : 0.0;
}

// ---------------------------------------------------------------------------
// Small enumerations

/// S3 in lexicographic order.
inline std::vector<std::array<int, 3>> s3() {
  std::array<int, 3> p{0, 1, 2};
  std::vector<std::array<int, 3>> out;
  do {
    out.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));
  return out;
}

/// Exponential bucket by repeated doubling: largest e with 2^e <= delta + 1.
inline unsigned time_bucket(std::int64_t delta) {
  unsigned e = 0;
  long double v = 2;
  while (e < 31 && v <= static_cast<long double>(delta) + 1) {
    ++e;
    v *= 2;
  }
  return e;
}

// ---------------------------------------------------------------------------
// Finite differences

/// Central-difference gradient of f at x, every coordinate.
inline std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                                            double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double plus = f(x);
    x[i] = saved - h;
    const double minus = f(x);
    x[i] = saved;
    g[i] = (plus - minus) / (2 * h);
  }
  return g;
}

inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-3) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(a[i] - b[i]) / std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::isfinite(d) ? d : INFINITY);
  }
  return worst;
}

}  // namespace trafficlm::oracle
