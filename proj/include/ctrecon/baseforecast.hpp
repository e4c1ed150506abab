#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ctrecon/data.hpp"
#include "ctrecon/forecast_set.hpp"
#include "ctrecon/hierarchy.hpp"

namespace ctrecon {

enum class BaseMethod { kNaive, kEts, kSarima, kCombo };

std::string to_string(BaseMethod method);
BaseMethod parse_base_method(const std::string& name);

/// Forecast of one series plus its in-sample one-step residuals (same length
/// as the input, NaN where undefined).
struct SeriesForecast {
  std::vector<double> forecast;
  std::vector<double> residuals;
  std::string model;
  bool fallback = false;
};

/// Repeats the last observed season forward: step j copies series[L - season + j mod season].
std::vector<double> seasonal_naive(std::span<const double> series, int season, int horizon);
SeriesForecast seasonal_naive_forecast(std::span<const double> series, int season, int horizon);

/// mu + sum_s alpha_s sin(2 pi s t / period) + beta_s cos(2 pi s t / period),
/// with t = 1 at the first observation of the fitted series.
struct FourierSpec {
  int period = 1;
  int harmonics = 0;
  double mean = 0.0;
  std::vector<double> sin_coef;
  std::vector<double> cos_coef;

  double value_at(double t) const;
};

struct FourierFit {
  FourierSpec spec;
  std::vector<double> residuals;
  double bic = 0.0;
  double sse = 0.0;
};

/// Least-squares fits for S = 0..max_harmonics (bounded by 2S < period),
/// keeping the S with the lowest BIC = n ln(SSE/n) + (2S+1) ln n.
FourierFit fit_fourier(std::span<const double> series, int period, int max_harmonics);

struct ArimaOrder {
  int p = 0, d = 0, q = 0;
  int P = 0, D = 0, Q = 0;
  int period = 0;  // 0 for non-seasonal
  std::string describe() const;
};

/// ARIMA fitted by conditional sum of squares.
struct ArmaSpec {
  ArimaOrder order;
  std::vector<double> ar, ma, sar, sma;
  bool include_mean = false;
  double mean = 0.0;
  double sigma2 = 0.0;
  double bic = 0.0;
  int n_effective = 0;
  bool converged = false;
};

/// Minimal CSS fit of a fixed order. `condition` observations of the
/// differenced series are consumed as pre-sample (must be >= p + P*period).
ArmaSpec fit_arima_css(std::span<const double> series, const ArimaOrder& order, bool include_mean, int condition);

/// Forecast `horizon` steps ahead from a fitted model. Also returns the
/// in-sample one-step residuals aligned with `series`.
std::vector<double> arima_forecast(const ArmaSpec& model, std::span<const double> series, int horizon,
                                   std::vector<double>* residuals = nullptr);

/// True when every root of the AR and MA polynomials lies outside the unit circle by more than `tol`.
bool arima_admissible(const ArmaSpec& model, double tol = 1e-6);

/// KPSS level-stationarity statistic with a Bartlett long-run variance.
double kpss_statistic(std::span<const double> series);
/// Strength of seasonality from a classical additive decomposition, in [0, 1].
double seasonal_strength(std::span<const double> series, int period);

/// How a series at temporal order k is treated by SARIMA/ETS.
struct SeasonalHandling {
  enum class Kind { kSeasonalModel, kFourier, kNone } kind = Kind::kNone;
  int period = 0;
  int max_harmonics = 0;
};

/// m_k steps per day: daily series use a weekly seasonal model, series with
/// at least 8 steps per day use intra-day Fourier terms, the rest weekly Fourier terms.
SeasonalHandling seasonal_handling(int steps_per_day);

SeriesForecast sarima_forecast(std::span<const double> series, const SeasonalHandling& handling, int horizon,
                               int naive_season);

enum class EtsTrend { kNone, kAdditive, kDamped };

struct EtsSpec {
  EtsTrend trend = EtsTrend::kNone;
  int season = 0;  // 0 for non-seasonal
  double alpha = 0.5, beta = 0.0, gamma = 0.0, phi = 1.0;
  double level0 = 0.0, trend0 = 0.0;
  std::vector<double> season0;
  double sse = 0.0;
  double bic = 0.0;
  bool converged = false;
  std::string describe() const;
};

/// Additive-error ETS with the given structure; smoothing parameters by
/// bounded Nelder-Mead on the Gaussian likelihood, heuristic initial states.
EtsSpec fit_ets(std::span<const double> series, EtsTrend trend, int season);
std::vector<double> ets_forecast_path(const EtsSpec& model, std::span<const double> series, int horizon,
                                      std::vector<double>* residuals = nullptr);

SeriesForecast ets_forecast(std::span<const double> series, const SeasonalHandling& handling, int horizon,
                            int naive_season);

/// Elementwise mean of forecast sets with identical coverage.
BaseForecastSet combine_forecasts(const std::vector<BaseForecastSet>& sets);

struct ForecastWindow {
  int start_day = 0;       // first estimation day within the panel
  int estimation_days = 0;  // Q (or N)
  int horizon_days = 0;     // H
  std::string id() const;
};

struct BaseForecastOptions {
  int threads = 1;
  bool round = true;  // max(0, round half away from zero)
};

/// Fits `method` independently on every (node, order) series aggregated from
/// the bottom panel over the estimation range.
BaseForecastSet produce_base_forecasts(const Panel& bottom_panel, const Hierarchy& hierarchy,
                                       const TemporalScheme& scheme, BaseMethod method, const ForecastWindow& window,
                                       const BaseForecastOptions& options = {});

/// All series of a window: (node, order) -> aggregated history, Hierarchy order.
std::vector<std::vector<double>> window_series(const Panel& bottom_panel, const Hierarchy& hierarchy,
                                               const TemporalScheme& scheme, int start_day, int days);

}  // namespace ctrecon
