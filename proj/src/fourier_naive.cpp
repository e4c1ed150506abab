#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "ctrecon/baseforecast.hpp"

namespace ctrecon {

std::vector<double> seasonal_naive(std::span<const double> series, int season, int horizon) {
  if (season <= 0) throw std::invalid_argument("seasonal_naive: season must be positive");
  if (series.size() < static_cast<std::size_t>(season)) {
    throw std::invalid_argument("seasonal_naive: series of length " + std::to_string(series.size()) +
                                " is shorter than one season (" + std::to_string(season) + ")");
  }
  const std::size_t start = series.size() - static_cast<std::size_t>(season);
  std::vector<double> out(static_cast<std::size_t>(std::max(0, horizon)));
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = series[start + j % static_cast<std::size_t>(season)];
  return out;
}

SeriesForecast seasonal_naive_forecast(std::span<const double> series, int season, int horizon) {
  SeriesForecast f;
  f.forecast = seasonal_naive(series, season, horizon);
  f.residuals.assign(series.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t t = static_cast<std::size_t>(season); t < series.size(); ++t) {
    f.residuals[t] = series[t] - series[t - static_cast<std::size_t>(season)];
  }
  f.model = "naive[" + std::to_string(season) + "]";
  return f;
}

double FourierSpec::value_at(double t) const {
  double v = mean;
  for (int s = 1; s <= harmonics; ++s) {
    const double arg = 2.0 * std::numbers::pi * s * t / period;
    v += sin_coef[static_cast<std::size_t>(s - 1)] * std::sin(arg) + cos_coef[static_cast<std::size_t>(s - 1)] * std::cos(arg);
  }
  return v;
}

FourierFit fit_fourier(std::span<const double> series, int period, int max_harmonics) {
  const auto n = static_cast<Eigen::Index>(series.size());
  if (period <= 0) throw std::invalid_argument("fit_fourier: period must be positive");
  if (n < 2 * period) {
    throw std::invalid_argument("fit_fourier: need at least two periods (" + std::to_string(2 * period) +
                                " points), got " + std::to_string(n));
  }
  const Eigen::Map<const Eigen::VectorXd> y(series.data(), n);
  const double sse_floor = 1e-12 * std::max(y.squaredNorm(), 1e-200);
  const double log_n = std::log(static_cast<double>(n));

  FourierFit best;
  bool have_best = false;
  for (int S = 0; S <= std::max(0, max_harmonics); ++S) {
    if (2 * S >= period) break;
    const Eigen::Index cols = 2 * S + 1;
    if (cols >= n) break;
    Eigen::MatrixXd X(n, cols);
    for (Eigen::Index t = 0; t < n; ++t) {
      X(t, 0) = 1.0;
      for (int s = 1; s <= S; ++s) {
        const double arg = 2.0 * std::numbers::pi * s * static_cast<double>(t + 1) / period;
        X(t, 2 * s - 1) = std::sin(arg);
        X(t, 2 * s) = std::cos(arg);
      }
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < cols) continue;  // rank deficient: keep the smaller S already seen
    const Eigen::VectorXd coef = qr.solve(y);
    const Eigen::VectorXd resid = y - X * coef;
    const double sse = resid.squaredNorm();
    const double bic = static_cast<double>(n) * std::log(std::max(sse, sse_floor) / static_cast<double>(n)) +
                       static_cast<double>(cols) * log_n;
    if (!have_best || bic < best.bic) {
      have_best = true;
      best.bic = bic;
      best.sse = sse;
      best.spec.period = period;
      best.spec.harmonics = S;
      best.spec.mean = coef(0);
      best.spec.sin_coef.assign(static_cast<std::size_t>(S), 0.0);
      best.spec.cos_coef.assign(static_cast<std::size_t>(S), 0.0);
      for (int s = 1; s <= S; ++s) {
        best.spec.sin_coef[static_cast<std::size_t>(s - 1)] = coef(2 * s - 1);
        best.spec.cos_coef[static_cast<std::size_t>(s - 1)] = coef(2 * s);
      }
      best.residuals.assign(resid.data(), resid.data() + n);
    }
  }
  if (!have_best) throw std::runtime_error("fit_fourier: no estimable harmonic count");
  return best;
}

}  // namespace ctrecon
