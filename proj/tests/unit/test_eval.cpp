#include <gtest/gtest.h>

#include <regex>

#include "trafficlm/eval.hpp"
#include "trafficlm/rng.hpp"
#include "trafficlm/testing/oracles.hpp"
#include "util.hpp"

using namespace trafficlm;

TEST(Classification, CountsExample) {
  // class 0: 9 hits, 1 false alarm, 3 misses
  std::vector<std::int32_t> pred, truth;
  for (int i = 0; i < 9; ++i) pred.push_back(0), truth.push_back(0);
  pred.push_back(0), truth.push_back(1);
  for (int i = 0; i < 3; ++i) pred.push_back(1), truth.push_back(0);
  const auto r = classification_report(pred, truth, 2);
  const auto& c = r.per_class[0];
  EXPECT_EQ(c.tp, 9u);
  EXPECT_EQ(c.fp, 1u);
  EXPECT_EQ(c.fn, 3u);
  EXPECT_EQ(c.support, 12u);
  EXPECT_NEAR(c.precision, 0.9, 1e-12);
  EXPECT_NEAR(c.recall, 0.75, 1e-12);
  EXPECT_NEAR(c.f1, 0.8181818181818182, 1e-12);
  EXPECT_NEAR(r.accuracy, 9.0 / 13.0, 1e-12);
}

TEST(Classification, PerfectAndAbsentClasses) {
  const std::vector<std::int32_t> y{0, 1, 2, 2, 1};
  const auto r = classification_report(y, y, 4);
  EXPECT_EQ(r.accuracy, 1.0);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(r.per_class[k].f1, 1.0);
    EXPECT_FALSE(r.per_class[k].undefined);
  }
  EXPECT_TRUE(r.per_class[3].undefined);
  EXPECT_EQ(r.per_class[3].f1, 0.0);
  EXPECT_NEAR(r.macro_f1, 0.75, 1e-12);
  const auto csv = classification_csv(r, {"a", "b", "c", "d"});
  EXPECT_NE(csv.find("d,0.000000,0.000000,0.000000,0,1,"), std::string::npos);
  EXPECT_NE(csv.find("Average,"), std::string::npos);
}

TEST(Classification, Errors) {
  const std::vector<std::int32_t> a{0, 1}, b{0}, bad{0, 5};
  EXPECT_ERROR(LengthMismatch, classification_report(a, b, 2));
  EXPECT_ERROR(EmptySample, classification_report(std::vector<std::int32_t>{}, std::vector<std::int32_t>{}, 2));
  EXPECT_ERROR(LabelOutOfRange, classification_report(a, bad, 2));
  EXPECT_ERROR(LabelOutOfRange, classification_report(bad, a, 2));
}

TEST(Classification, MatchesConfusionMatrixOracle) {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    const int k = 2 + static_cast<int>(rng.below(16));
    const std::size_t n = 1 + rng.below(300);
    std::vector<std::int32_t> p(n), y(n);
    std::vector<int> pi(n), yi(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = yi[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
      p[i] = pi[i] = rng.uniform() < 0.6 ? y[i] : static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
    }
    const auto r = classification_report(p, y, static_cast<std::size_t>(k));
    double acc = 0;
    const auto o = oracle::confusion_metrics(pi, yi, k, &acc);
    EXPECT_NEAR(r.accuracy, acc, 1e-12);
    for (int c = 0; c < k; ++c) {
      EXPECT_NEAR(r.per_class[c].precision, o[c].precision, 1e-12);
      EXPECT_NEAR(r.per_class[c].recall, o[c].recall, 1e-12);
      EXPECT_NEAR(r.per_class[c].f1, o[c].f1, 1e-12);
    }
  }
}

TEST(Regression, Example) {
  const std::vector<double> y{100, 200}, p{110, 180};
  const auto r = regression_report(p, y);
  EXPECT_NEAR(r.mae, 15.0, 1e-12);
  EXPECT_NEAR(r.mape, 10.0, 1e-12);
  EXPECT_NEAR(r.r2, 0.9, 1e-12);
  EXPECT_EQ(r.n, 2u);
  EXPECT_EQ(regression_csv(r), "n,mae_bytes,mape_percent,r2,mape_skipped,r2_undefined\n2,15.000000,10.000000,0.900000,0,0\n");
}

TEST(Regression, MeanPredictorAndEdgeCases) {
  const std::vector<double> y{3, 5, 10, 2};
  const std::vector<double> mean(4, 5.0);
  EXPECT_NEAR(regression_report(mean, y).r2, 0.0, 1e-12);
  EXPECT_EQ(regression_report(y, y).r2, 1.0);
  const std::vector<double> with_zero{0, 10}, pz{1, 11};
  const auto z = regression_report(pz, with_zero);
  EXPECT_EQ(z.mape_skipped, 1u);
  EXPECT_NEAR(z.mape, 10.0, 1e-12);
  const std::vector<double> flat{7, 7};
  EXPECT_TRUE(regression_report(flat, flat).r2_undefined);
  EXPECT_ERROR(EmptySample, regression_report(std::vector<double>{1}, std::vector<double>{1}));
  EXPECT_ERROR(LengthMismatch, regression_report(y, flat));
}

TEST(Regression, ScaleProperty) {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng.below(50);
    std::vector<double> y(n), p(n), ys(n), ps(n);
    const double s = 0.1 + 10 * rng.uniform();
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = 1 + 1000 * rng.uniform();
      p[i] = y[i] + 100 * (rng.uniform() - 0.5);
      ys[i] = s * y[i];
      ps[i] = s * p[i];
    }
    const auto a = regression_report(p, y), b = regression_report(ps, ys);
    EXPECT_NEAR(b.mae, s * a.mae, 1e-9 * (1 + b.mae));
    EXPECT_NEAR(b.mape, a.mape, 1e-9);
    EXPECT_NEAR(b.r2, a.r2, 1e-9);
  }
}

TEST(Ks, Examples) {
  EXPECT_NEAR(ks_statistic({1, 2, 3}, {1, 2, 4}), 1.0 / 3.0, 1e-12);
  EXPECT_EQ(ks_statistic({1, 2}, {3, 4}), 1.0);
  EXPECT_EQ(ks_statistic({5, 5, 5}, {5}), 0.0);
  EXPECT_ERROR(EmptySample, ks_statistic({}, {1}));
}

TEST(Ks, SymmetricInvariantAndMatchesOracle) {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> a(1 + rng.below(60)), b(1 + rng.below(60));
    for (auto& v : a) v = static_cast<double>(rng.below(20));
    for (auto& v : b) v = static_cast<double>(rng.below(25));
    const double d = ks_statistic(a, b);
    EXPECT_EQ(d, ks_statistic(b, a));
    EXPECT_NEAR(d, oracle::ks(a, b), 1e-12);
    std::vector<double> ea(a.size()), eb(b.size());
    std::transform(a.begin(), a.end(), ea.begin(), [](double x) { return std::exp(x / 4) + 3; });
    std::transform(b.begin(), b.end(), eb.begin(), [](double x) { return std::exp(x / 4) + 3; });
    EXPECT_NEAR(ks_statistic(ea, eb), d, 1e-12);
  }
}

TEST(Auc, ExamplesAndOracle) {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<std::int32_t> l{0, 0, 1, 1};
  EXPECT_NEAR(roc_auc(s, l), 0.75, 1e-12);
  const std::vector<double> tied{0.5, 0.5};
  const std::vector<std::int32_t> l2{0, 1};
  EXPECT_EQ(roc_auc(tied, l2), 0.5);
  EXPECT_ERROR(DegenerateLabels, roc_auc(tied, std::vector<std::int32_t>{1, 1}));
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng.below(80);
    std::vector<double> sc(n);
    std::vector<std::int32_t> lb(n);
    std::vector<int> li(n);
    for (std::size_t i = 0; i < n; ++i) {
      sc[i] = static_cast<double>(rng.below(10));
      lb[i] = li[i] = static_cast<int>(rng.below(2));
    }
    lb[0] = li[0] = 0;
    lb[1] = li[1] = 1;
    EXPECT_NEAR(roc_auc(sc, lb), oracle::auc(sc, li), 1e-12);
  }
}

TEST(CdfPlot, WellFormedMonotoneSteps) {
  const auto svg = cdf_plot({64, 64, 128, 30}, {64, 200, 1}, "TTL <hops> & more");
  EXPECT_EQ(svg.rfind("<?xml", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_NE(svg.find("TTL &lt;hops&gt; &amp; more"), std::string::npos);
  const std::regex poly("<polyline[^>]*points=\"([^\"]*)\"");
  std::size_t lines = 0;
  for (std::sregex_iterator it(svg.begin(), svg.end(), poly), end; it != end; ++it) {
    ++lines;
    std::istringstream pts((*it)[1].str());
    std::string pair;
    double prev_x = -1, prev_y = -1;
    while (pts >> pair) {
      const double x = std::stod(pair.substr(0, pair.find(','))), y = std::stod(pair.substr(pair.find(',') + 1));
      EXPECT_GE(x, prev_x);
      EXPECT_GE(y, prev_y);
      EXPECT_LE(y, 300.0);
      prev_x = x;
      prev_y = y;
    }
    EXPECT_EQ(prev_y, 300.0);
  }
  EXPECT_EQ(lines, 2u);
  EXPECT_ERROR(EmptySample, cdf_plot({}, {1}, "x"));
}
