#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "ctrecon/baseforecast.hpp"
#include "ctrecon/util.hpp"

using namespace ctrecon;

namespace {

std::vector<double> white_noise(std::size_t n, double mean, double sd, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(mean, sd);
  std::vector<double> x(n);
  for (auto& v : x) v = z(rng);
  return x;
}

std::vector<double> ar1(std::size_t n, double phi, double mean, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> x(n);
  double prev = 0.0;
  for (std::size_t t = 0; t < n + 200; ++t) {
    prev = phi * prev + z(rng);
    if (t >= 200) x[t - 200] = mean + prev;
  }
  return x;
}

Panel small_panel(int m, int days, std::uint64_t seed) {
  SyntheticConfig c;
  c.nodes = {"a1", "a2", "a3", "a4"};
  c.base_means = {2.0, 3.0, 1.0, 4.0};
  c.days = days;
  c.grid = SlotGrid{m, 30, 7 * 60};
  c.daily_profile = default_daily_profile(m);
  c.weekly_multipliers = {1.0, 1.1, 1.1, 1.0, 1.2, 0.7, 0.6};
  c.seed = seed;
  return generate_synthetic(c);
}

Hierarchy small_hierarchy() {
  HierarchySpec spec;
  spec.records = {{"M", "", "market"}, {"Z1", "M", "zone"}, {"Z2", "M", "zone"}, {"a1", "Z1", "area"},
                  {"a2", "Z1", "area"}, {"a3", "Z2", "area"}, {"a4", "Z2", "area"}};
  return Hierarchy::build(spec);
}

}  // namespace

TEST(SeasonalNaive, CopiesLastWeek) {
  std::vector<double> x{1, 2, 3, 4, 5, 6, 7, 10, 11, 12, 13, 14, 15, 16};
  EXPECT_EQ(seasonal_naive(x, 7, 7), (std::vector<double>{10, 11, 12, 13, 14, 15, 16}));
  EXPECT_EQ(seasonal_naive(x, 7, 9), (std::vector<double>{10, 11, 12, 13, 14, 15, 16, 10, 11}));
  EXPECT_THROW(seasonal_naive(std::vector<double>(6, 1.0), 7, 7), std::invalid_argument);
}

TEST(SeasonalNaive, ConstantAndPeriodic) {
  EXPECT_EQ(seasonal_naive(std::vector<double>(21, 4.0), 7, 14), std::vector<double>(14, 4.0));
  std::vector<double> periodic(7 * 6);
  for (std::size_t t = 0; t < periodic.size(); ++t) periodic[t] = static_cast<double>(t % 7) * 3.0 + 1.0;
  std::vector<double> future(14);
  for (std::size_t j = 0; j < 14; ++j) future[j] = static_cast<double>((periodic.size() + j) % 7) * 3.0 + 1.0;
  EXPECT_EQ(seasonal_naive(periodic, 7, 14), future);
}

TEST(SeasonalNaive, CommutesWithTemporalAggregation) {
  const int m = 8;
  std::mt19937 rng(4);
  std::uniform_int_distribution<int> draw(0, 9);
  std::vector<double> x(m * 14);
  for (auto& v : x) v = draw(rng);
  const auto f1 = seasonal_naive(x, 7 * m, 7 * m);
  for (int k : {2, 4, 8}) {
    const auto xk = temporal_aggregate(x, k);
    EXPECT_EQ(seasonal_naive(xk, 7 * m / k, 7 * m / k), temporal_aggregate(f1, k)) << "k=" << k;
  }
}

TEST(Fourier, PureSinusoidPicksOneHarmonic) {
  std::vector<double> x(96);
  for (std::size_t t = 0; t < x.size(); ++t) {
    x[t] = 5.0 + 2.0 * std::sin(2.0 * std::numbers::pi * static_cast<double>(t + 1) / 24.0);
  }
  const auto fit = fit_fourier(x, 24, 3);
  EXPECT_EQ(fit.spec.harmonics, 1);
  EXPECT_LE(fit.sse, 1e-8 * std::inner_product(x.begin(), x.end(), x.begin(), 0.0));
  EXPECT_NEAR(fit.spec.sin_coef[0], 2.0, 1e-9);
  EXPECT_NEAR(fit.spec.value_at(97), x[0 + 96 % 24], 1e-9);
}

TEST(Fourier, WhiteNoisePicksZeroHarmonics) {
  const auto x = white_noise(480, 10.0, 1.0, 17);
  EXPECT_EQ(fit_fourier(x, 48, 6).spec.harmonics, 0);
}

TEST(Fourier, ConstantSeries) {
  const auto fit = fit_fourier(std::vector<double>(40, 3.25), 10, 3);
  EXPECT_NEAR(fit.spec.mean, 3.25, 1e-12);
  for (double c : fit.spec.sin_coef) EXPECT_NEAR(c, 0.0, 1e-12);
  for (double c : fit.spec.cos_coef) EXPECT_NEAR(c, 0.0, 1e-12);
}

TEST(Fourier, HarmonicBoundAndLength) {
  const auto x = white_noise(40, 0.0, 1.0, 3);
  EXPECT_LT(2 * fit_fourier(x, 4, 6).spec.harmonics, 4);
  EXPECT_THROW(fit_fourier(std::vector<double>(7, 1.0), 4, 1), std::invalid_argument);
}

TEST(Arima, WhiteNoiseGivesMeanForecast) {
  const auto x = white_noise(400, 7.0, 1.0, 21);
  const auto f = sarima_forecast(x, SeasonalHandling{}, 5, 7);
  ASSERT_FALSE(f.fallback) << f.model;
  for (double v : f.forecast) EXPECT_NEAR(v, 7.0, 2.0 / std::sqrt(400.0) + 0.05);
}

TEST(Arima, Ar1RecoversCoefficient) {
  const auto x = ar1(500, 0.8, 3.0, 8);
  const auto model = fit_arima_css(x, ArimaOrder{1, 0, 0, 0, 0, 0, 0}, true, 1);
  ASSERT_TRUE(model.converged);
  ASSERT_EQ(model.ar.size(), 1u);
  EXPECT_NEAR(model.ar[0], 0.8, 0.1);
  const auto f = arima_forecast(model, x, 1);
  EXPECT_NEAR(f[0], model.mean + model.ar[0] * (x.back() - model.mean), 1e-9);

  // the automatic search lands close to the closed-form AR(1) predictor
  const auto chosen = sarima_forecast(x, SeasonalHandling{}, 1, 7);
  const double closed_form = 3.0 + 0.8 * (x.back() - 3.0);
  EXPECT_NEAR(chosen.forecast[0], closed_form, 0.5) << chosen.model;
}

TEST(Arima, DeterministicWeeklyPatternIsDifferencedAway) {
  std::vector<double> x(7 * 20);
  const double pattern[7] = {10, 14, 13, 12, 16, 5, 3};
  for (std::size_t t = 0; t < x.size(); ++t) x[t] = pattern[t % 7];
  EXPECT_GT(seasonal_strength(x, 7), 0.99);
  const auto f = sarima_forecast(x, seasonal_handling(1), 14, 7);
  ASSERT_FALSE(f.fallback) << f.model;
  EXPECT_NE(f.model.find(",1,"), std::string::npos) << f.model;  // D = 1 in the seasonal part
  double ss = 0.0;
  int count = 0;
  for (double r : f.residuals) {
    if (std::isfinite(r)) {
      ss += r * r;
      ++count;
    }
  }
  ASSERT_GT(count, 0);
  EXPECT_LT(ss / count, 1e-8);
  for (std::size_t j = 0; j < 14; ++j) EXPECT_NEAR(f.forecast[j], pattern[(x.size() + j) % 7], 1e-6);
}

TEST(Arima, AdmissibilityCheck) {
  ArmaSpec m;
  m.ar = {1.2};
  EXPECT_FALSE(arima_admissible(m));
  m.ar = {0.5, 0.3};
  EXPECT_TRUE(arima_admissible(m));
  m.ma = {-1.0};
  EXPECT_FALSE(arima_admissible(m));
}

TEST(Arima, DifferencedForecastUndoesDifferencing) {
  // random walk with drift fitted as ARIMA(0,1,0) with no mean: flat at the last value
  const auto x = white_noise(200, 0.0, 1.0, 5);
  std::vector<double> walk(x.size());
  std::partial_sum(x.begin(), x.end(), walk.begin());
  const auto m = fit_arima_css(walk, ArimaOrder{0, 1, 0, 0, 0, 0, 0}, false, 0);
  const auto f = arima_forecast(m, walk, 3);
  for (double v : f) EXPECT_NEAR(v, walk.back(), 1e-12);
}

TEST(Kpss, StationaryVersusRandomWalk) {
  const auto noise = white_noise(300, 0.0, 1.0, 9);
  std::vector<double> walk(noise.size());
  std::partial_sum(noise.begin(), noise.end(), walk.begin());
  EXPECT_GT(kpss_statistic(walk), 0.463);
  // a 5% level test rejects stationary noise about one time in twenty
  int rejections = 0;
  for (unsigned seed = 0; seed < 200; ++seed) rejections += kpss_statistic(white_noise(300, 0.0, 1.0, seed)) > 0.463;
  EXPECT_LE(rejections, 20);
  EXPECT_EQ(kpss_statistic(std::vector<double>(50, 2.0)), 0.0);
}

TEST(Ets, ConstantSeries) {
  const auto f = ets_forecast(std::vector<double>(60, 4.0), SeasonalHandling{}, 5, 7);
  ASSERT_FALSE(f.fallback);
  for (double v : f.forecast) EXPECT_NEAR(v, 4.0, 1e-9);
}

TEST(Ets, HoltExtrapolatesLinearTrend) {
  std::vector<double> x(50);
  for (std::size_t t = 0; t < x.size(); ++t) x[t] = 3.0 + 0.5 * static_cast<double>(t);
  const auto model = fit_ets(x, EtsTrend::kAdditive, 0);
  const auto f = ets_forecast_path(model, x, 10);
  for (std::size_t h = 0; h < f.size(); ++h) {
    const double truth = 3.0 + 0.5 * static_cast<double>(x.size() + h);
    EXPECT_NEAR(f[h], truth, 1e-6 * truth);
  }
}

TEST(Ets, LevelShiftGivesLargeAlpha) {
  auto x = white_noise(120, 10.0, 0.3, 13);
  for (std::size_t t = 60; t < x.size(); ++t) x[t] += 8.0;
  const auto model = fit_ets(x, EtsTrend::kNone, 0);
  EXPECT_GE(model.alpha, 0.5);
  const auto f = ets_forecast_path(model, x, 1);
  EXPECT_NEAR(f[0], 18.0, 1.0);
}

TEST(Ets, ParametersInsideBounds) {
  const auto x = white_noise(7 * 12, 20.0, 2.0, 2);
  for (auto trend : {EtsTrend::kNone, EtsTrend::kAdditive, EtsTrend::kDamped}) {
    const auto m = fit_ets(x, trend, 7);
    EXPECT_GE(m.alpha, 1e-4);
    EXPECT_LE(m.alpha, 0.9999);
    EXPECT_LE(m.gamma, 1.0 - m.alpha + 1e-12);
    if (trend != EtsTrend::kNone) EXPECT_LE(m.beta, m.alpha + 1e-12);
    if (trend == EtsTrend::kDamped) {
      EXPECT_GE(m.phi, 0.8);
      EXPECT_LE(m.phi, 0.98);
    }
  }
}

TEST(Combine, ElementwiseMean) {
  const auto h = small_hierarchy();
  const TemporalScheme scheme(2, {1, 2});
  std::vector<BaseForecastSet> sets(3);
  for (int s = 0; s < 3; ++s) {
    sets[static_cast<std::size_t>(s)].forecasts = CrossTemporalForecast::zeros(h, scheme, 1);
    sets[static_cast<std::size_t>(s)].residuals = CrossTemporalForecast::zeros(h, scheme, 2);
    sets[static_cast<std::size_t>(s)].forecasts.at(0, 0)[1] = 1.0 + 2.0 * s;
  }
  const auto out = combine_forecasts(sets);
  EXPECT_DOUBLE_EQ(out.forecasts.at(0, 0)[1], 3.0);
  EXPECT_EQ(combine_forecasts({sets[0]}).forecasts.values, sets[0].forecasts.values);
  auto bad = sets;
  bad[1].forecasts = CrossTemporalForecast::zeros(h, scheme, 2);
  EXPECT_THROW(combine_forecasts(bad), std::invalid_argument);
}

TEST(Combine, ComboEqualsHandAverage) {
  const auto panel = small_panel(4, 35, 77);
  const auto h = small_hierarchy();
  const TemporalScheme scheme(4, {1, 2, 4});
  const ForecastWindow w{0, 35, 2};
  BaseForecastOptions raw;
  raw.round = false;
  const auto naive = produce_base_forecasts(panel, h, scheme, BaseMethod::kNaive, w, raw);
  const auto sarima = produce_base_forecasts(panel, h, scheme, BaseMethod::kSarima, w, raw);
  const auto ets = produce_base_forecasts(panel, h, scheme, BaseMethod::kEts, w, raw);
  const auto combo = produce_base_forecasts(panel, h, scheme, BaseMethod::kCombo, w, raw);
  for (std::size_t idx = 0; idx < combo.forecasts.values.size(); ++idx) {
    for (std::size_t t = 0; t < combo.forecasts.values[idx].size(); ++t) {
      const double hand =
          (naive.forecasts.values[idx][t] + sarima.forecasts.values[idx][t] + ets.forecasts.values[idx][t]) / 3.0;
      EXPECT_NEAR(combo.forecasts.values[idx][t], hand, 1e-12);
    }
  }
}

TEST(Produce, LondonShapedLengths) {
  const auto panel = small_panel(34, 21, 1);
  const auto h = small_hierarchy();
  const TemporalScheme scheme(34, {1, 2, 34});
  const auto set = produce_base_forecasts(panel, h, scheme, BaseMethod::kNaive, ForecastWindow{0, 14, 7});
  set.forecasts.check_complete();
  EXPECT_EQ(set.forecasts.values.size(), h.size() * 3);
  for (std::size_t i = 0; i < h.size(); ++i) {
    EXPECT_EQ(set.forecasts.at(i, 0).size(), 238u);
    EXPECT_EQ(set.forecasts.at(i, 1).size(), 119u);
    EXPECT_EQ(set.forecasts.at(i, 2).size(), 7u);
  }
  EXPECT_EQ(set.method, "naive");
  EXPECT_EQ(set.window_id, "d0-q14-h7");
}

TEST(Produce, CitiShapedHorizonOneDay) {
  const auto panel = small_panel(48, 14, 2);
  const auto h = small_hierarchy();
  const TemporalScheme scheme(48, {1, 2, 3, 4, 6, 8, 12, 16, 24, 48});
  const auto set = produce_base_forecasts(panel, h, scheme, BaseMethod::kNaive, ForecastWindow{0, 14, 1});
  for (std::size_t o = 0; o < scheme.p(); ++o) {
    EXPECT_EQ(set.forecasts.at(0, o).size(), static_cast<std::size_t>(48 / scheme.orders()[o]));
  }
}

TEST(Produce, RoundingRule) {
  EXPECT_EQ(round_nonnegative(-0.4), 0.0);
  EXPECT_EQ(round_nonnegative(2.5), 3.0);
  EXPECT_EQ(round_nonnegative(2.49), 2.0);
  EXPECT_EQ(round_nonnegative(-3.0), 0.0);
}

TEST(Produce, RoundedNonNegativeIntegersAndDeterministic) {
  const auto panel = small_panel(4, 42, 3);
  const auto h = small_hierarchy();
  const TemporalScheme scheme(4, {1, 2, 4});
  BaseForecastOptions opts;
  opts.threads = 3;
  const auto a = produce_base_forecasts(panel, h, scheme, BaseMethod::kEts, ForecastWindow{7, 35, 7}, opts);
  const auto b = produce_base_forecasts(panel, h, scheme, BaseMethod::kEts, ForecastWindow{7, 35, 7});
  EXPECT_EQ(a.forecasts.values, b.forecasts.values);
  for (const auto& v : a.forecasts.values) {
    for (double x : v) {
      EXPECT_GE(x, 0.0);
      EXPECT_EQ(x, std::round(x));
    }
  }
}

TEST(Produce, ShortWindowFallsBackAndIsFlagged) {
  const auto panel = small_panel(4, 14, 4);
  const auto h = small_hierarchy();
  const TemporalScheme scheme(4, {1, 2, 4});
  const auto set = produce_base_forecasts(panel, h, scheme, BaseMethod::kSarima, ForecastWindow{0, 14, 7});
  // 14 daily points is shorter than four weekly seasons
  EXPECT_GT(set.fallback_count(), 0u);
  EXPECT_EQ(set.method, "sarima+fallback");
  set.forecasts.check_complete();
}

TEST(Produce, MalformedWindow) {
  const auto panel = small_panel(4, 14, 4);
  const auto h = small_hierarchy();
  const TemporalScheme scheme(4, {1, 2, 4});
  EXPECT_THROW(produce_base_forecasts(panel, h, scheme, BaseMethod::kNaive, ForecastWindow{10, 14, 7}),
               std::invalid_argument);
  EXPECT_THROW(produce_base_forecasts(panel, h, scheme, BaseMethod::kNaive, ForecastWindow{0, 14, 0}),
               std::invalid_argument);
}
