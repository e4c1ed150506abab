#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ctrecon/baseforecast.hpp"
#include "ctrecon/util.hpp"

namespace ctrecon {

std::string to_string(BaseMethod method) {
  switch (method) {
    case BaseMethod::kNaive: return "naive";
    case BaseMethod::kEts: return "ets";
    case BaseMethod::kSarima: return "sarima";
    case BaseMethod::kCombo: return "combo";
  }
  return "unknown";
}

BaseMethod parse_base_method(const std::string& name) {
  if (name == "naive") return BaseMethod::kNaive;
  if (name == "ets") return BaseMethod::kEts;
  if (name == "sarima" || name == "arima") return BaseMethod::kSarima;
  if (name == "combo") return BaseMethod::kCombo;
  throw std::invalid_argument("unknown base method '" + name + "' (expected naive|ets|sarima|combo)");
}

std::string ForecastWindow::id() const {
  return "d" + std::to_string(start_day) + "-q" + std::to_string(estimation_days) + "-h" + std::to_string(horizon_days);
}

namespace {

void check_same_shape(const CrossTemporalForecast& a, const CrossTemporalForecast& b, const char* what) {
  if (a.nodes != b.nodes || a.orders != b.orders || a.m != b.m || a.periods != b.periods) {
    throw std::invalid_argument(std::string("combine_forecasts: ") + what + " coverage mismatch");
  }
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    if (a.values[i].size() != b.values[i].size()) {
      throw std::invalid_argument(std::string("combine_forecasts: ") + what + " length mismatch");
    }
  }
}

}  // namespace

BaseForecastSet combine_forecasts(const std::vector<BaseForecastSet>& sets) {
  if (sets.empty()) throw std::invalid_argument("combine_forecasts: no inputs");
  for (const auto& s : sets) {
    s.forecasts.check_complete();
    check_same_shape(sets.front().forecasts, s.forecasts, "forecast");
    check_same_shape(sets.front().residuals, s.residuals, "residual");
  }
  BaseForecastSet out = sets.front();
  const double inv = 1.0 / static_cast<double>(sets.size());
  for (std::size_t idx = 0; idx < out.forecasts.values.size(); ++idx) {
    auto& f = out.forecasts.values[idx];
    auto& r = out.residuals.values[idx];
    for (std::size_t t = 0; t < f.size(); ++t) {
      double acc = 0.0;
      for (const auto& s : sets) acc += s.forecasts.values[idx][t];
      f[t] = acc * inv;
    }
    for (std::size_t t = 0; t < r.size(); ++t) {
      double acc = 0.0;
      for (const auto& s : sets) acc += s.residuals.values[idx][t];  // NaN propagates
      r[t] = acc * inv;
    }
  }
  out.fallback.assign(out.forecasts.values.size(), false);
  for (const auto& s : sets) {
    for (std::size_t i = 0; i < s.fallback.size() && i < out.fallback.size(); ++i) {
      out.fallback[i] = out.fallback[i] || s.fallback[i];
    }
  }
  out.method = "combo";
  return out;
}

std::vector<std::vector<double>> window_series(const Panel& bottom_panel, const Hierarchy& hierarchy,
                                               const TemporalScheme& scheme, int start_day, int days) {
  if (bottom_panel.slots_per_day() != scheme.m()) {
    throw std::invalid_argument("panel has " + std::to_string(bottom_panel.slots_per_day()) +
                                " slots per day but the temporal scheme has m = " + std::to_string(scheme.m()));
  }
  if (start_day < 0 || days <= 0 || start_day + days > bottom_panel.days()) {
    throw std::invalid_argument("window [" + std::to_string(start_day) + ", " + std::to_string(start_day + days) +
                                ") outside panel of " + std::to_string(bottom_panel.days()) + " days");
  }
  const Panel ordered = bottom_panel.reorder(hierarchy.bottom_ids());
  const Eigen::Index first = static_cast<Eigen::Index>(start_day) * scheme.m();
  const Eigen::Index len = static_cast<Eigen::Index>(days) * scheme.m();
  const CountMatrix slice = ordered.values.middleCols(first, len);
  const CountMatrix full = cross_sectional_aggregate(slice, hierarchy);
  std::vector<std::vector<double>> out(hierarchy.size() * scheme.p());
  for (std::size_t i = 0; i < hierarchy.size(); ++i) {
    std::vector<double> base(static_cast<std::size_t>(len));
    for (Eigen::Index t = 0; t < len; ++t) base[static_cast<std::size_t>(t)] = static_cast<double>(full(static_cast<Eigen::Index>(i), t));
    for (std::size_t o = 0; o < scheme.p(); ++o) out[i * scheme.p() + o] = temporal_aggregate(base, scheme.orders()[o]);
  }
  return out;
}

namespace {

SeriesForecast fit_one(BaseMethod method, std::span<const double> series, int steps_per_day, int horizon) {
  const int weekly = 7 * steps_per_day;
  switch (method) {
    case BaseMethod::kNaive: return seasonal_naive_forecast(series, weekly, horizon);
    case BaseMethod::kEts: return ets_forecast(series, seasonal_handling(steps_per_day), horizon, weekly);
    case BaseMethod::kSarima: return sarima_forecast(series, seasonal_handling(steps_per_day), horizon, weekly);
    case BaseMethod::kCombo: break;
  }
  throw std::logic_error("fit_one: combo is assembled from its members");
}

BaseForecastSet produce_raw(const std::vector<std::vector<double>>& history, const Hierarchy& hierarchy,
                            const TemporalScheme& scheme, BaseMethod method, const ForecastWindow& window,
                            int threads) {
  BaseForecastSet set;
  set.forecasts = CrossTemporalForecast::zeros(hierarchy, scheme, window.horizon_days);
  set.residuals = CrossTemporalForecast::zeros(hierarchy, scheme, window.estimation_days);
  set.fallback.assign(history.size(), false);
  set.window_id = window.id();
  const std::size_t p = scheme.p();
  parallel_for(history.size(), threads, [&](std::size_t idx) {
    const int k = scheme.orders()[idx % p];
    const int steps = scheme.m() / k;
    auto f = fit_one(method, history[idx], steps, steps * window.horizon_days);
    set.forecasts.values[idx] = std::move(f.forecast);
    set.residuals.values[idx] = std::move(f.residuals);
    set.fallback[idx] = f.fallback;
  });
  set.method = to_string(method);
  return set;
}

}  // namespace

BaseForecastSet produce_base_forecasts(const Panel& bottom_panel, const Hierarchy& hierarchy,
                                       const TemporalScheme& scheme, BaseMethod method, const ForecastWindow& window,
                                       const BaseForecastOptions& options) {
  if (window.estimation_days < 7) throw std::invalid_argument("base forecasts need at least one week of history");
  if (window.horizon_days <= 0) throw std::invalid_argument("base forecasts need a positive horizon");
  const auto history = window_series(bottom_panel, hierarchy, scheme, window.start_day, window.estimation_days);
  const int threads = resolve_threads(options.threads);

  BaseForecastSet set;
  if (method == BaseMethod::kCombo) {
    std::vector<BaseForecastSet> members;
    for (BaseMethod m : {BaseMethod::kNaive, BaseMethod::kSarima, BaseMethod::kEts}) {
      members.push_back(produce_raw(history, hierarchy, scheme, m, window, threads));
    }
    set = combine_forecasts(members);
  } else {
    set = produce_raw(history, hierarchy, scheme, method, window, threads);
  }
  set.window_id = window.id();
  if (set.fallback_count() > 0) set.method += "+fallback";
  if (options.round) {
    for (auto& v : set.forecasts.values) {
      for (auto& x : v) x = round_nonnegative(x);
    }
  }
  return set;
}

}  // namespace ctrecon
