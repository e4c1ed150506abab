#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "ctrecon/baseforecast.hpp"
#include "optim.hpp"

namespace ctrecon {

namespace {

constexpr double kLower = 1e-4;
constexpr double kUpperAlpha = 0.9999;
constexpr double kPhiLower = 0.8;
constexpr double kPhiUpper = 0.98;

double squash(double x, double lo, double hi) { return lo + (hi - lo) / (1.0 + std::exp(-x)); }

double unsquash(double v, double lo, double hi) {
  const double u = std::clamp((v - lo) / (hi - lo), 1e-6, 1.0 - 1e-6);
  return std::log(u / (1.0 - u));
}

bool has_trend(EtsTrend t) { return t != EtsTrend::kNone; }

double mean_of(std::span<const double> x, std::size_t from, std::size_t to) {
  return std::accumulate(x.begin() + static_cast<std::ptrdiff_t>(from), x.begin() + static_cast<std::ptrdiff_t>(to),
                         0.0) /
         static_cast<double>(to - from);
}

// initial level/trend/season from the first observations
void initial_states(std::span<const double> y, EtsSpec& m) {
  const std::size_t n = y.size();
  const auto s = static_cast<std::size_t>(m.season);
  m.season0.clear();
  if (s > 0) {
    const std::size_t cycles = std::min<std::size_t>(n / s, 4);
    const double first = mean_of(y, 0, s);
    m.trend0 = (has_trend(m.trend) && cycles >= 2) ? (mean_of(y, s, 2 * s) - first) / static_cast<double>(s) : 0.0;
    m.season0.assign(s, 0.0);
    for (std::size_t c = 0; c < cycles; ++c) {
      const double centre = mean_of(y, c * s, (c + 1) * s);
      for (std::size_t j = 0; j < s; ++j) m.season0[j] += (y[c * s + j] - centre) / static_cast<double>(cycles);
    }
    // level at time 0 sits half a season before the mean of the first cycle
    m.level0 = first - m.trend0 * (static_cast<double>(s) + 1.0) / 2.0;
    return;
  }
  const std::size_t k = std::min<std::size_t>(n, 10);
  m.trend0 = (has_trend(m.trend) && k >= 2) ? (y[k - 1] - y[0]) / static_cast<double>(k - 1) : 0.0;
  m.level0 = y[0] - m.phi * m.trend0;
}

// runs the state recursion; returns SSE and optionally residuals and final states
struct EtsState {
  double level = 0.0, trend = 0.0;
  std::vector<double> season;  // season[t mod s] holds the latest estimate for that position
};

double run_filter(const EtsSpec& m, std::span<const double> y, std::vector<double>* errors, EtsState* final_state) {
  EtsState st{m.level0, m.trend0, m.season0};
  const auto s = static_cast<std::size_t>(m.season);
  const double phi = m.trend == EtsTrend::kDamped ? m.phi : 1.0;
  double sse = 0.0;
  if (errors) errors->assign(y.size(), 0.0);
  for (std::size_t t = 0; t < y.size(); ++t) {
    const double damped = has_trend(m.trend) ? phi * st.trend : 0.0;
    const double seas = s > 0 ? st.season[t % s] : 0.0;
    const double e = y[t] - (st.level + damped + seas);
    st.level = st.level + damped + m.alpha * e;
    if (has_trend(m.trend)) st.trend = damped + m.beta * e;
    if (s > 0) st.season[t % s] = seas + m.gamma * e;
    sse += e * e;
    if (errors) (*errors)[t] = e;
  }
  if (final_state) *final_state = std::move(st);
  return sse;
}

int parameter_count(const EtsSpec& m) {
  int k = 1;  // alpha
  if (has_trend(m.trend)) ++k;
  if (m.trend == EtsTrend::kDamped) ++k;
  if (m.season > 0) ++k;
  int states = 1 + (has_trend(m.trend) ? 1 : 0) + (m.season > 0 ? m.season - 1 : 0);
  return k + states + 1;
}

}  // namespace

std::string EtsSpec::describe() const {
  std::string t = trend == EtsTrend::kNone ? "N" : trend == EtsTrend::kAdditive ? "A" : "Ad";
  return "ETS(A," + t + "," + (season > 0 ? "A[" + std::to_string(season) + "]" : std::string("N")) + ")";
}

EtsSpec fit_ets(std::span<const double> series, EtsTrend trend, int season) {
  if (season < 0 || season == 1) throw std::invalid_argument("fit_ets: season must be 0 or at least 2");
  const std::size_t min_len = season > 0 ? 2 * static_cast<std::size_t>(season) : 4;
  if (series.size() < min_len) throw std::invalid_argument("fit_ets: series too short");

  EtsSpec spec;
  spec.trend = trend;
  spec.season = season;

  auto unpack = [&](const std::vector<double>& x, EtsSpec& m) {
    std::size_t i = 0;
    m.alpha = squash(x[i++], kLower, kUpperAlpha);
    m.beta = has_trend(trend) ? squash(x[i++], kLower, m.alpha) : 0.0;
    m.phi = trend == EtsTrend::kDamped ? squash(x[i++], kPhiLower, kPhiUpper) : 1.0;
    m.gamma = season > 0 ? squash(x[i++], kLower, 1.0 - m.alpha) : 0.0;
    initial_states(series, m);
  };

  std::vector<double> x0{unsquash(0.5, kLower, kUpperAlpha)};
  if (has_trend(trend)) x0.push_back(unsquash(0.1, kLower, 0.5));
  if (trend == EtsTrend::kDamped) x0.push_back(unsquash(0.9, kPhiLower, kPhiUpper));
  if (season > 0) x0.push_back(unsquash(0.1, kLower, 0.5));

  EtsSpec trial = spec;
  auto objective = [&](const std::vector<double>& x) {
    unpack(x, trial);
    const double sse = run_filter(trial, series, nullptr, nullptr);
    return std::isfinite(sse) ? sse : std::numeric_limits<double>::max();
  };
  detail::NelderMeadOptions opts;
  opts.initial_step = 0.5;
  opts.max_evaluations = 2000;
  const auto result = detail::nelder_mead(objective, x0, opts);

  unpack(result.x, spec);
  spec.sse = run_filter(spec, series, nullptr, nullptr);
  const auto n = static_cast<double>(series.size());
  double sumsq = 0.0;
  for (double v : series) sumsq += v * v;
  const double floor = 1e-12 * std::max(sumsq, 1e-200);
  spec.bic = n * std::log(std::max(spec.sse, floor) / n) + parameter_count(spec) * std::log(n);
  // a flat objective stops on the tolerance in x rather than f; both count as converged
  spec.converged = std::isfinite(spec.sse) && (result.converged || spec.sse <= floor);
  return spec;
}

std::vector<double> ets_forecast_path(const EtsSpec& model, std::span<const double> series, int horizon,
                                      std::vector<double>* residuals) {
  EtsState st;
  std::vector<double> e;
  run_filter(model, series, residuals ? &e : nullptr, &st);
  if (residuals) residuals->swap(e);
  const auto s = static_cast<std::size_t>(model.season);
  const double phi = model.trend == EtsTrend::kDamped ? model.phi : 1.0;
  std::vector<double> out(static_cast<std::size_t>(std::max(0, horizon)));
  double cumulative_phi = 0.0, power = 1.0;
  for (std::size_t h = 0; h < out.size(); ++h) {
    power *= phi;
    cumulative_phi += power;
    double v = st.level;
    if (has_trend(model.trend)) v += cumulative_phi * st.trend;
    if (s > 0) v += st.season[(series.size() + h) % s];
    out[h] = v;
  }
  return out;
}

SeriesForecast ets_forecast(std::span<const double> series, const SeasonalHandling& handling, int horizon,
                            int naive_season) {
  using Kind = SeasonalHandling::Kind;
  auto fallback = [&](const std::string& why) {
    auto f = seasonal_naive_forecast(series, std::min<int>(naive_season, static_cast<int>(series.size())), horizon);
    f.fallback = true;
    f.model += " (fallback: " + why + ")";
    return f;
  };
  const auto n = static_cast<int>(series.size());
  std::vector<double> target(series.begin(), series.end());
  FourierSpec fourier;
  std::vector<int> seasons{0};
  if (handling.kind == Kind::kSeasonalModel) {
    if (n < 4 * handling.period) return fallback("series shorter than four seasons");
    seasons.push_back(handling.period);
  } else if (handling.kind == Kind::kFourier) {
    if (n < 2 * handling.period) return fallback("series shorter than two periods");
    auto ff = fit_fourier(series, handling.period, handling.max_harmonics);
    fourier = ff.spec;
    target = std::move(ff.residuals);
  }

  EtsSpec best;
  bool found = false;
  for (int season : seasons) {
    for (EtsTrend trend : {EtsTrend::kNone, EtsTrend::kAdditive, EtsTrend::kDamped}) {
      EtsSpec fit;
      try {
        fit = fit_ets(target, trend, season);
      } catch (const std::invalid_argument&) {
        continue;
      }
      if (!fit.converged) continue;
      if (!found || fit.bic < best.bic) {
        best = fit;
        found = true;
      }
    }
  }
  if (!found) return fallback("no ETS candidate converged");

  SeriesForecast f;
  f.forecast = ets_forecast_path(best, target, horizon, &f.residuals);
  if (handling.kind == Kind::kFourier) {
    for (int h = 0; h < horizon; ++h) f.forecast[static_cast<std::size_t>(h)] += fourier.value_at(n + h + 1);
    f.model = "fourier[" + std::to_string(fourier.period) + ",S=" + std::to_string(fourier.harmonics) + "]+" +
              best.describe();
  } else {
    f.model = best.describe();
  }
  if (!std::all_of(f.forecast.begin(), f.forecast.end(), [](double v) { return std::isfinite(v); })) {
    return fallback("non-finite forecast");
  }
  return f;
}

}  // namespace ctrecon
