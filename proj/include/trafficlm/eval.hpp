#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "trafficlm/error.hpp"

namespace trafficlm {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;  // occurrences in the labels
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  /// Set when the class occurs in neither labels nor predictions; its
  /// metrics are then reported as 0.
  bool undefined = false;
};

struct ClassificationReport {
  std::vector<ClassMetrics> per_class;
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::size_t total = 0;
};

/// One-vs-rest metrics per class; macro averages are unweighted means over
/// all n_classes. Ratios with a zero denominator are 0.
inline ClassificationReport classification_report(std::span<const std::int32_t> predictions, std::span<const std::int32_t> labels,
                                                  std::size_t n_classes) {
  if (predictions.size() != labels.size()) throw Error(ErrorCode::LengthMismatch, "predictions and labels differ in length");
  if (labels.empty()) throw Error(ErrorCode::EmptySample, "no labels");
  ClassificationReport r;
  r.per_class.assign(n_classes, {});
  r.total = labels.size();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto y = labels[i], p = predictions[i];
    if (y < 0 || static_cast<std::size_t>(y) >= n_classes) throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(y));
    if (p < 0 || static_cast<std::size_t>(p) >= n_classes) throw Error(ErrorCode::LabelOutOfRange, "prediction " + std::to_string(p));
    ++r.per_class[static_cast<std::size_t>(y)].support;
    if (y == p) {
      ++correct;
      ++r.per_class[static_cast<std::size_t>(y)].tp;
    } else {
      ++r.per_class[static_cast<std::size_t>(p)].fp;
      ++r.per_class[static_cast<std::size_t>(y)].fn;
    }
  }
  for (auto& c : r.per_class) {
    c.undefined = c.tp + c.fp + c.fn == 0;
    c.precision = c.tp + c.fp ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
    c.recall = c.tp + c.fn ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
    c.f1 = c.precision + c.recall > 0 ? 2 * c.precision * c.recall / (c.precision + c.recall) : 0.0;
    r.macro_precision += c.precision;
    r.macro_recall += c.recall;
    r.macro_f1 += c.f1;
  }
  if (n_classes > 0) {
    r.macro_precision /= static_cast<double>(n_classes);
    r.macro_recall /= static_cast<double>(n_classes);
    r.macro_f1 /= static_cast<double>(n_classes);
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  return r;
}

/// One row per class plus an "Average" row (macro means, total support,
/// accuracy). class_names may be empty.
inline std::string classification_csv(const ClassificationReport& r, const std::vector<std::string>& class_names = {}) {
  std::ostringstream out;
  out << std::setprecision(6) << std::fixed;
  out << "class,precision,recall,f1,support,undefined,accuracy\n";
  for (std::size_t k = 0; k < r.per_class.size(); ++k) {
    const auto& c = r.per_class[k];
    out << (k < class_names.size() ? class_names[k] : std::to_string(k)) << ',' << c.precision << ',' << c.recall << ',' << c.f1
        << ',' << c.support << ',' << (c.undefined ? 1 : 0) << ",\n";
  }
  out << "Average," << r.macro_precision << ',' << r.macro_recall << ',' << r.macro_f1 << ',' << r.total << ",0," << r.accuracy
      << '\n';
  return out.str();
}

struct RegressionReport {
  double mae = 0.0;
  double mape = 0.0;  // percent, over nonzero targets
  double r2 = 0.0;
  std::size_t n = 0;
  std::size_t mape_skipped = 0;  // zero targets left out of MAPE
  bool r2_undefined = false;     // constant targets; r2 reported as 0
};

inline RegressionReport regression_report(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size()) throw Error(ErrorCode::LengthMismatch, "predictions and targets differ in length");
  if (targets.size() < 2) throw Error(ErrorCode::EmptySample, "regression metrics need two samples");
  RegressionReport r;
  r.n = targets.size();
  double mean = 0;
  for (double y : targets) mean += y;
  mean /= static_cast<double>(r.n);
  double sse = 0, sst = 0, ape = 0;
  std::size_t ape_n = 0;
  for (std::size_t i = 0; i < r.n; ++i) {
    const double e = predictions[i] - targets[i];
    r.mae += std::abs(e);
    sse += e * e;
    sst += (targets[i] - mean) * (targets[i] - mean);
    if (targets[i] != 0.0) {
      ape += std::abs(e) / std::abs(targets[i]);
      ++ape_n;
    } else {
      ++r.mape_skipped;
    }
  }
  r.mae /= static_cast<double>(r.n);
  r.mape = ape_n ? 100.0 * ape / static_cast<double>(ape_n) : 0.0;
  if (sst > 0) {
    r.r2 = 1.0 - sse / sst;
  } else {
    r.r2_undefined = true;
  }
  return r;
}

inline std::string regression_csv(const RegressionReport& r) {
  std::ostringstream out;
  out << std::setprecision(6) << std::fixed;
  out << "n,mae_bytes,mape_percent,r2,mape_skipped,r2_undefined\n";
  out << r.n << ',' << r.mae << ',' << r.mape << ',' << r.r2 << ',' << r.mape_skipped << ',' << (r.r2_undefined ? 1 : 0) << '\n';
  return out.str();
}

/// Two-sample Kolmogorov-Smirnov distance: max |F_a(x) - F_b(x)|.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::EmptySample, "KS needs two non-empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0;
  while (i < a.size() || j < b.size()) {
    const double x = j == b.size() || (i < a.size() && a[i] <= b[j]) ? a[i] : b[j];
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / static_cast<double>(a.size()) -
                             static_cast<double>(j) / static_cast<double>(b.size())));
  }
  return d;
}

/// Area under the ROC curve (ties count half).
inline double roc_auc(std::span<const double> scores, std::span<const std::int32_t> labels) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::LengthMismatch, "scores and labels differ in length");
  std::vector<std::size_t> idx(scores.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return scores[x] < scores[y]; });
  double pos = 0, neg = 0, rank_sum = 0;
  for (std::size_t s = 0; s < idx.size();) {
    std::size_t e = s;
    while (e < idx.size() && scores[idx[e]] == scores[idx[s]]) ++e;
    const double mid_rank = (static_cast<double>(s + 1) + static_cast<double>(e)) / 2.0;
    for (std::size_t k = s; k < e; ++k) {
      if (labels[idx[k]] == 1) rank_sum += mid_rank;
    }
    s = e;
  }
  for (auto l : labels) (l == 1 ? pos : neg) += 1;
  if (pos == 0 || neg == 0) throw Error(ErrorCode::DegenerateLabels, "AUC needs both classes");
  return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg);
}

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

/// Standalone SVG with the empirical CDFs of both samples as step
/// polylines. Polyline points live in a y-up plot frame (y = 300 * F(x)),
/// so their y coordinates never decrease.
inline std::string cdf_plot(std::vector<double> real, std::vector<double> generated, const std::string& axis_label) {
  if (real.empty() || generated.empty()) throw Error(ErrorCode::EmptySample, "CDF plot needs two non-empty samples");
  constexpr double W = 480, H = 300, left = 70, top = 30;
  std::sort(real.begin(), real.end());
  std::sort(generated.begin(), generated.end());
  double lo = std::min(real.front(), generated.front());
  double hi = std::max(real.back(), generated.back());
  if (hi == lo) {
    lo -= 1;
    hi += 1;
  }
  auto sx = [&](double x) { return (x - lo) / (hi - lo) * W; };
  auto steps = [&](const std::vector<double>& s) {
    std::ostringstream pts;
    pts << std::setprecision(6);
    pts << sx(lo) << ",0";
    double f = 0;
    for (std::size_t i = 0; i < s.size();) {
      std::size_t j = i;
      while (j < s.size() && s[j] == s[i]) ++j;
      const double nf = static_cast<double>(j) / static_cast<double>(s.size());
      pts << ' ' << sx(s[i]) << ',' << f * H << ' ' << sx(s[i]) << ',' << nf * H;
      f = nf;
      i = j;
    }
    pts << ' ' << sx(hi) << ',' << H;
    return pts.str();
  };
  std::ostringstream svg;
  svg << std::setprecision(6);
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W + left + 130 << "\" height=\"" << H + top + 60 << "\">\n";
  svg << "  <rect x=\"0\" y=\"0\" width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "  <g transform=\"translate(" << left << ',' << top + H << ") scale(1,-1)\">\n";
  svg << "    <line x1=\"0\" y1=\"0\" x2=\"" << W << "\" y2=\"0\" stroke=\"black\"/>\n";
  svg << "    <line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"" << H << "\" stroke=\"black\"/>\n";
  svg << "    <polyline id=\"real\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"" << steps(real) << "\"/>\n";
  svg << "    <polyline id=\"generated\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\" stroke-dasharray=\"6,3\" points=\""
      << steps(generated) << "\"/>\n";
  svg << "  </g>\n";
  svg << "  <text x=\"" << left + W / 2 << "\" y=\"" << top + H + 40 << "\" text-anchor=\"middle\">"
      << detail::xml_escape(axis_label) << "</text>\n";
  svg << "  <text x=\"20\" y=\"" << top + H / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 20 " << top + H / 2
      << ")\">CDF</text>\n";
  svg << "  <text x=\"" << left - 5 << "\" y=\"" << top + H + 15 << "\" text-anchor=\"end\">" << lo << "</text>\n";
  svg << "  <text x=\"" << left + W << "\" y=\"" << top + H + 15 << "\" text-anchor=\"middle\">" << hi << "</text>\n";
  svg << "  <text x=\"" << left - 5 << "\" y=\"" << top + 5 << "\" text-anchor=\"end\">1</text>\n";
  svg << "  <g id=\"legend\">\n";
  svg << "    <line x1=\"" << left + W + 15 << "\" y1=\"" << top + 10 << "\" x2=\"" << left + W + 40 << "\" y2=\"" << top + 10
      << "\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n";
  svg << "    <text x=\"" << left + W + 45 << "\" y=\"" << top + 14 << "\">real</text>\n";
  svg << "    <line x1=\"" << left + W + 15 << "\" y1=\"" << top + 30 << "\" x2=\"" << left + W + 40 << "\" y2=\"" << top + 30
      << "\" stroke=\"#d62728\" stroke-width=\"2\" stroke-dasharray=\"6,3\"/>\n";
  svg << "    <text x=\"" << left + W + 45 << "\" y=\"" << top + 34 << "\">generated</text>\n";
  svg << "  </g>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace trafficlm
