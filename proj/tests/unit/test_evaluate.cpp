#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ctrecon/evaluate.hpp"

using namespace ctrecon;

namespace {

Hierarchy london_like() {
  HierarchySpec spec;
  spec.records.push_back({"M", "", "market"});
  for (int z = 0; z < 18; ++z) spec.records.push_back({"Z" + std::to_string(z), "M", "zone"});
  for (int a = 0; a < 117; ++a) spec.records.push_back({"A" + std::to_string(a), "Z" + std::to_string(a % 18), "area"});
  return Hierarchy::build(spec);
}

// Rank by counting: 1 + strictly smaller entries + half the other ties.
std::vector<double> counting_ranks(const Eigen::MatrixXd& e) {
  std::vector<double> avg(static_cast<std::size_t>(e.rows()), 0.0);
  int used = 0;
  for (Eigen::Index s = 0; s < e.cols(); ++s) {
    if (!e.col(s).allFinite()) continue;
    ++used;
    for (Eigen::Index i = 0; i < e.rows(); ++i) {
      double r = 1.0;
      for (Eigen::Index j = 0; j < e.rows(); ++j) {
        if (j == i) continue;
        if (e(j, s) < e(i, s)) r += 1.0;
        if (e(j, s) == e(i, s)) r += 0.5;
      }
      avg[static_cast<std::size_t>(i)] += r;
    }
  }
  for (auto& v : avg) v /= used;
  return avg;
}

}  // namespace

TEST(Wape, HandExamples) {
  const std::vector<double> a{10, 20, 30};
  EXPECT_EQ(*wape(a, a), 0.0);
  EXPECT_EQ(*wape(a, std::vector<double>{0, 0, 0}), 1.0);
  EXPECT_NEAR(*wape(a, std::vector<double>{12, 18, 33}), 7.0 / 60.0, 1e-15);
}

TEST(Wape, ZeroTotalIsMissing) {
  const std::vector<double> z{0, 0, 0};
  EXPECT_FALSE(wape(z, std::vector<double>{1, 0, 0}).has_value());
  EXPECT_THROW(wape(z, std::vector<double>{1, 0}), std::invalid_argument);
}

TEST(Wape, ScaleInvariant) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 50.0), c(0.01, 100.0);
  std::uniform_int_distribution<int> len(1, 60);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> a(static_cast<std::size_t>(len(rng))), f(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = u(rng);
      f[i] = u(rng);
    }
    const double k = c(rng);
    std::vector<double> ka(a), kf(f);
    for (auto& v : ka) v *= k;
    for (auto& v : kf) v *= k;
    const double w = *wape(a, f);
    EXPECT_LE(std::abs(*wape(ka, kf) - w), 1e-12 * std::max(1.0, w));
  }
}

TEST(Mase, HandRatio) {
  // lag 2: in-sample |diffs| = 2,2,2,2 -> 2; test MAE = 3
  const std::vector<double> in{1, 5, 3, 7, 5, 9};
  const std::vector<double> a{4, 4}, f{7, 1};
  EXPECT_DOUBLE_EQ(*mase(a, f, in, 2), 1.5);
  EXPECT_EQ(*mase(a, a, in, 2), 0.0);
}

TEST(Mase, SeasonalNaiveEqualErrorsGiveOne) {
  const std::vector<double> in{2, 4, 6, 3, 5, 7};
  const std::vector<double> a{4, 6, 8}, naive{3, 5, 7};
  EXPECT_DOUBLE_EQ(*mase(a, naive, in, 3), 1.0);
}

TEST(Mase, DegenerateDenominatorIsMissing) {
  const std::vector<double> flat{3, 3, 3, 3}, a{1}, f{2};
  EXPECT_FALSE(mase(a, f, flat, 2).has_value());
  EXPECT_FALSE(mase(a, f, std::vector<double>{1, 2}, 2).has_value());
}

TEST(Evaluate, RowsPerNodeOrderWithWeeklyLag) {
  const auto h = Hierarchy::build(HierarchySpec::two_level("M", {"a", "b"}));
  const TemporalScheme scheme(2, {1, 2});
  auto insample = CrossTemporalForecast::zeros(h, scheme, 8);
  for (std::size_t node = 0; node < 3; ++node) {
    for (std::size_t oi = 0; oi < 2; ++oi) {
      auto& v = insample.at(node, oi);
      for (std::size_t t = 0; t < v.size(); ++t) v[t] = static_cast<double>(t);
    }
  }
  auto actual = CrossTemporalForecast::zeros(h, scheme, 1);
  auto forecast = actual;
  for (std::size_t node = 0; node < 3; ++node) {
    actual.at(node, 0) = {4, 6};
    actual.at(node, 1) = {10};
    forecast.at(node, 0) = {5, 5};
    forecast.at(node, 1) = {12};
  }
  const auto t = evaluate_forecasts("bu", forecast, actual, insample, h, scheme, "all");
  ASSERT_EQ(t.rows.size(), 6u);
  // order 1: lag 14, in-sample diffs all 14 -> MAE 1 / 14
  EXPECT_DOUBLE_EQ(*t.value("bu", "a", 1, false), 1.0 / 14.0);
  // order 2: lag 7, diffs all 7 -> MAE 2 / 7
  EXPECT_DOUBLE_EQ(*t.value("bu", "a", 2, false), 2.0 / 7.0);
  EXPECT_DOUBLE_EQ(*t.value("bu", "M", 2, true), 0.2);
}

TEST(AccuracyCsv, RoundTripWithMissing) {
  AccuracyTable t;
  t.rows.push_back({"rf", "a", "area", 1, 0.25, std::nullopt, "all"});
  t.rows.push_back({"bu", "M", "market", 2, 1.0 / 3.0, 0.5, "post"});
  const auto back = AccuracyTable::from_csv(t.to_csv());
  EXPECT_EQ(back.to_csv(), t.to_csv());
  EXPECT_FALSE(back.rows[0].mase.has_value());
  EXPECT_EQ(*back.rows[1].wape, 1.0 / 3.0);
}

TEST(LevelSummary, MeansAndMissing) {
  const auto h = Hierarchy::build(HierarchySpec::two_level("M", {"a", "b"}));
  const TemporalScheme scheme(2, {1, 2});
  AccuracyTable t;
  t.rows.push_back({"rf", "a", "area", 1, 0.2, 1.0, "all"});
  t.rows.push_back({"rf", "b", "area", 1, 0.4, std::nullopt, "all"});
  t.rows.push_back({"rf", "M", "market", 1, 0.7, 0.9, "all"});
  const auto rows = level_summary(t, h, scheme);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].level, "area");
  EXPECT_NEAR(*rows[0].wape, 0.3, 1e-15);
  EXPECT_FALSE(rows[0].mase.has_value());
  EXPECT_FALSE(rows[1].wape.has_value());
  EXPECT_EQ(rows[2].level, "market");
  EXPECT_EQ(*rows[2].wape, 0.7);
}

TEST(LevelSummary, LargeLevelMatchesDirectMean) {
  const auto h = london_like();
  const TemporalScheme scheme(34, {1, 2, 34});
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  AccuracyTable t;
  double direct = 0.0;
  for (std::size_t node = 0; node < h.size(); ++node) {
    for (int k : scheme.orders()) {
      const double w = u(rng);
      t.rows.push_back({"ite", h.id(node), h.level(node), k, w, u(rng), "all"});
      if (h.level(node) == "area" && k == 2) direct += w;
    }
  }
  const auto rows = level_summary(t, h, scheme);
  EXPECT_EQ(rows.front().level, "area");
  EXPECT_NEAR(*rows[1].wape, direct / 117.0, 1e-12);
  EXPECT_EQ(rows.size(), 9u);
  const auto text = level_table_csv(rows, scheme, true);
  EXPECT_EQ(text.substr(0, text.find('\n')), "period,level,method,k=1,k=2,k=34");
}

TEST(Mcb, DominantMethod) {
  Eigen::MatrixXd e(2, 5);
  e << 1, 1, 1, 1, 1, 2, 2, 2, 2, 2;
  const auto r = mcb_test(e, {"A", "B"});
  EXPECT_EQ(r.average_ranks[0], 1.0);
  EXPECT_EQ(r.average_ranks[1], 2.0);
  EXPECT_EQ(r.best, 0u);
}

TEST(Mcb, IdenticalColumnsShareMidRank) {
  const Eigen::MatrixXd e = Eigen::MatrixXd::Constant(4, 6, 0.3);
  const auto r = mcb_test(e, {"a", "b", "c", "d"});
  for (double v : r.average_ranks) EXPECT_EQ(v, 2.5);
  for (bool w : r.significantly_worse) EXPECT_FALSE(w);
}

TEST(Mcb, CriticalDistanceExample) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u;
  const Eigen::MatrixXd e = Eigen::MatrixXd::NullaryExpr(3, 20, [&] { return u(rng); });
  const auto r = mcb_test(e, {"a", "b", "c"});
  ASSERT_TRUE(r.critical_distance.has_value());
  EXPECT_NEAR(*r.critical_distance, 2.343701 * std::sqrt(12.0 / 240.0), 1e-12);
  EXPECT_NEAR(*r.critical_distance, 0.524, 5e-4);
}

TEST(Mcb, SingleSeriesHasNoCriticalDistance) {
  Eigen::MatrixXd e(3, 2);
  e << 1, NAN, 2, 1, 3, 1;
  const auto r = mcb_test(e, {"a", "b", "c"});
  EXPECT_EQ(r.series_used, 1u);
  EXPECT_FALSE(r.critical_distance.has_value());
  EXPECT_EQ(r.average_ranks, (std::vector<double>{1, 2, 3}));
}

TEST(Mcb, MatchesCountingOracle) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> small(0, 3), methods(2, 6), series(2, 12);
  for (int trial = 0; trial < 300; ++trial) {
    const int M = methods(rng), n = series(rng);
    Eigen::MatrixXd e = Eigen::MatrixXd::NullaryExpr(M, n, [&] { return static_cast<double>(small(rng)); });
    if (trial % 5 == 0) e(0, 0) = NAN;
    std::vector<std::string> names;
    for (int i = 0; i < M; ++i) names.push_back("m" + std::to_string(i));
    const auto r = mcb_test(e, names);
    const auto oracle = counting_ranks(e);
    double total = 0.0;
    for (int i = 0; i < M; ++i) {
      EXPECT_NEAR(r.average_ranks[static_cast<std::size_t>(i)], oracle[static_cast<std::size_t>(i)], 1e-12);
      total += r.average_ranks[static_cast<std::size_t>(i)];
    }
    EXPECT_NEAR(total, M * (M + 1) / 2.0, 1e-9);
    if (!r.critical_distance) continue;
    const double best = *std::min_element(oracle.begin(), oracle.end());
    for (int i = 0; i < M; ++i) {
      const bool overlap = oracle[static_cast<std::size_t>(i)] - *r.critical_distance / 2.0 <= best + *r.critical_distance / 2.0;
      EXPECT_EQ(r.significantly_worse[static_cast<std::size_t>(i)], !overlap);
    }
  }
}

TEST(Mcb, NemenyiTableBounds) {
  EXPECT_DOUBLE_EQ(nemenyi_q(2, 0.05), 1.959964);
  EXPECT_DOUBLE_EQ(nemenyi_q(20, 0.10), 3.319233);
  for (int m = 3; m <= 20; ++m) {
    EXPECT_GT(nemenyi_q(m, 0.05), nemenyi_q(m - 1, 0.05));
    EXPECT_GT(nemenyi_q(m, 0.05), nemenyi_q(m, 0.10));
  }
  EXPECT_THROW(nemenyi_q(21, 0.05), std::invalid_argument);
  EXPECT_THROW(nemenyi_q(3, 0.01), std::invalid_argument);
}
