#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "ctrecon/baseforecast.hpp"
#include "optim.hpp"

namespace ctrecon {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kKpssCritical5pct = 0.463;
constexpr double kSeasonalStrengthThreshold = 0.64;

// coefficients of (1 - sum a_i B^i)(1 - sum A_j B^{sj}) as 1 - sum c_l B^l
std::vector<double> expand_ar(const std::vector<double>& a, const std::vector<double>& sa, int s) {
  const std::size_t len = a.size() + sa.size() * static_cast<std::size_t>(s);
  std::vector<double> poly(len + 1, 0.0);  // poly of (1 - ...), stored with sign
  std::vector<double> left(a.size() + 1, 0.0), right(sa.size() * static_cast<std::size_t>(s) + 1, 0.0);
  left[0] = right[0] = 1.0;
  for (std::size_t i = 0; i < a.size(); ++i) left[i + 1] = -a[i];
  for (std::size_t j = 0; j < sa.size(); ++j) right[(j + 1) * static_cast<std::size_t>(s)] = -sa[j];
  for (std::size_t i = 0; i < left.size(); ++i) {
    for (std::size_t j = 0; j < right.size(); ++j) poly[i + j] += left[i] * right[j];
  }
  std::vector<double> c(len);
  for (std::size_t l = 1; l <= len; ++l) c[l - 1] = -poly[l];
  return c;
}

// coefficients of (1 + sum b_i B^i)(1 + sum B_j B^{sj}) as 1 + sum c_l B^l
std::vector<double> expand_ma(const std::vector<double>& b, const std::vector<double>& sb, int s) {
  std::vector<double> nb(b.size()), nsb(sb.size());
  std::transform(b.begin(), b.end(), nb.begin(), [](double v) { return -v; });
  std::transform(sb.begin(), sb.end(), nsb.begin(), [](double v) { return -v; });
  auto c = expand_ar(nb, nsb, s);
  for (auto& v : c) v = -v;
  return c;
}

// all roots of 1 - sum a_i z^i outside the unit circle
bool ar_stationary(const std::vector<double>& a, double tol) {
  if (a.empty()) return true;
  const auto p = static_cast<Eigen::Index>(a.size());
  if (p == 1) return std::abs(a[0]) < 1.0 - tol;
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) companion(0, i) = a[static_cast<std::size_t>(i)];
  for (Eigen::Index i = 1; i < p; ++i) companion(i, i - 1) = 1.0;
  const Eigen::VectorXcd eig = companion.eigenvalues();
  return eig.cwiseAbs().maxCoeff() < 1.0 - tol;
}

std::vector<double> difference(std::span<const double> y, int d, int D, int s) {
  std::vector<double> w(y.begin(), y.end());
  for (int i = 0; i < D; ++i) {
    std::vector<double> next;
    for (std::size_t t = static_cast<std::size_t>(s); t < w.size(); ++t) next.push_back(w[t] - w[t - static_cast<std::size_t>(s)]);
    w.swap(next);
  }
  for (int i = 0; i < d; ++i) {
    std::vector<double> next;
    for (std::size_t t = 1; t < w.size(); ++t) next.push_back(w[t] - w[t - 1]);
    w.swap(next);
  }
  return w;
}

// (1-B)^d (1-B^s)^D written as 1 - sum delta_l B^l
std::vector<double> differencing_polynomial(int d, int D, int s) {
  std::vector<double> poly{1.0};
  auto multiply = [&poly](int lag) {
    std::vector<double> next(poly.size() + static_cast<std::size_t>(lag), 0.0);
    for (std::size_t i = 0; i < poly.size(); ++i) {
      next[i] += poly[i];
      next[i + static_cast<std::size_t>(lag)] -= poly[i];
    }
    poly.swap(next);
  };
  for (int i = 0; i < D; ++i) multiply(s);
  for (int i = 0; i < d; ++i) multiply(1);
  std::vector<double> delta(poly.size() - 1);
  for (std::size_t l = 1; l < poly.size(); ++l) delta[l - 1] = -poly[l];
  return delta;
}

struct Expanded {
  std::vector<double> ar, ma;
};

Expanded expand(const ArmaSpec& m) {
  return {expand_ar(m.ar, m.sar, std::max(1, m.order.period)), expand_ma(m.ma, m.sma, std::max(1, m.order.period))};
}

// one-step residuals of the differenced series; zeros before `condition`
double css_residuals(const std::vector<double>& w, const Expanded& poly, double mean, int condition,
                     std::vector<double>* errors) {
  std::vector<double> e(w.size(), 0.0);
  double css = 0.0;
  for (std::size_t t = static_cast<std::size_t>(condition); t < w.size(); ++t) {
    double pred = mean;
    for (std::size_t l = 1; l <= poly.ar.size(); ++l) pred += poly.ar[l - 1] * (w[t - l] - mean);
    for (std::size_t l = 1; l <= poly.ma.size() && l <= t; ++l) pred += poly.ma[l - 1] * e[t - l];
    e[t] = w[t] - pred;
    css += e[t] * e[t];
  }
  if (errors) errors->swap(e);
  return css;
}

double variance(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double acc = 0.0;
  for (double v : x) acc += (v - mean) * (v - mean);
  return acc / static_cast<double>(x.size());
}

}  // namespace

std::string ArimaOrder::describe() const {
  std::ostringstream out;
  out << "ARIMA(" << p << ',' << d << ',' << q << ')';
  if (period > 0) out << '(' << P << ',' << D << ',' << Q << ")[" << period << ']';
  return out.str();
}

bool arima_admissible(const ArmaSpec& model, double tol) {
  std::vector<double> neg_ma(model.ma.size()), neg_sma(model.sma.size());
  std::transform(model.ma.begin(), model.ma.end(), neg_ma.begin(), [](double v) { return -v; });
  std::transform(model.sma.begin(), model.sma.end(), neg_sma.begin(), [](double v) { return -v; });
  return ar_stationary(model.ar, tol) && ar_stationary(model.sar, tol) && ar_stationary(neg_ma, tol) &&
         ar_stationary(neg_sma, tol);
}

ArmaSpec fit_arima_css(std::span<const double> series, const ArimaOrder& order, bool include_mean, int condition) {
  const int s = std::max(1, order.period);
  if (order.p < 0 || order.q < 0 || order.P < 0 || order.Q < 0 || order.d < 0 || order.D < 0) {
    throw std::invalid_argument("fit_arima_css: negative order");
  }
  if ((order.P > 0 || order.Q > 0 || order.D > 0) && order.period <= 1) {
    throw std::invalid_argument("fit_arima_css: seasonal terms need a period > 1");
  }
  if (condition < order.p + order.P * s) throw std::invalid_argument("fit_arima_css: condition shorter than AR lag");
  const auto w = difference(series, order.d, order.D, s);
  const int n_eff = static_cast<int>(w.size()) - condition;
  const int k = order.p + order.q + order.P + order.Q + (include_mean ? 1 : 0);
  if (n_eff <= k + 1) throw std::invalid_argument("fit_arima_css: series too short for " + order.describe());

  ArmaSpec spec;
  spec.order = order;
  spec.include_mean = include_mean;
  const double w_mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
  const double w_scale = std::sqrt(std::max(variance(w), 1e-12));

  auto unpack = [&](const std::vector<double>& x, ArmaSpec& m) {
    std::size_t i = 0;
    m.ar.assign(x.begin() + static_cast<std::ptrdiff_t>(i), x.begin() + static_cast<std::ptrdiff_t>(i + order.p));
    i += static_cast<std::size_t>(order.p);
    m.ma.assign(x.begin() + static_cast<std::ptrdiff_t>(i), x.begin() + static_cast<std::ptrdiff_t>(i + order.q));
    i += static_cast<std::size_t>(order.q);
    m.sar.assign(x.begin() + static_cast<std::ptrdiff_t>(i), x.begin() + static_cast<std::ptrdiff_t>(i + order.P));
    i += static_cast<std::size_t>(order.P);
    m.sma.assign(x.begin() + static_cast<std::ptrdiff_t>(i), x.begin() + static_cast<std::ptrdiff_t>(i + order.Q));
    i += static_cast<std::size_t>(order.Q);
    // the mean is optimised on a standardised scale
    m.mean = include_mean ? w_mean + x[i] * w_scale : 0.0;
  };

  ArmaSpec trial = spec;
  auto objective = [&](const std::vector<double>& x) {
    unpack(x, trial);
    if (!arima_admissible(trial)) return std::numeric_limits<double>::max();
    return css_residuals(w, expand(trial), trial.mean, condition, nullptr);
  };
  detail::NelderMeadOptions opts;
  opts.max_evaluations = 300 + 250 * k;
  opts.f_tolerance = 1e-9;
  const auto result = detail::nelder_mead(objective, std::vector<double>(static_cast<std::size_t>(k), 0.0), opts);

  unpack(result.x, spec);
  const double css = css_residuals(w, expand(spec), spec.mean, condition, nullptr);
  const double floor = 1e-12 * std::max(std::inner_product(w.begin(), w.end(), w.begin(), 0.0), 1e-200) /
                       static_cast<double>(w.size());
  spec.n_effective = n_eff;
  spec.sigma2 = std::max(css / n_eff, floor);
  spec.bic = n_eff * std::log(spec.sigma2) + (k + 1) * std::log(static_cast<double>(n_eff));
  spec.converged = result.converged && std::isfinite(css) && arima_admissible(spec);
  return spec;
}

std::vector<double> arima_forecast(const ArmaSpec& model, std::span<const double> series, int horizon,
                                   std::vector<double>* residuals) {
  const int s = std::max(1, model.order.period);
  const int offset = model.order.d + model.order.D * s;
  const auto w = difference(series, model.order.d, model.order.D, s);
  const auto poly = expand(model);
  const int condition = static_cast<int>(poly.ar.size());
  std::vector<double> e;
  css_residuals(w, poly, model.mean, std::max(condition, 0), &e);

  if (residuals) {
    residuals->assign(series.size(), kNaN);
    for (std::size_t t = static_cast<std::size_t>(condition); t < w.size(); ++t) {
      (*residuals)[t + static_cast<std::size_t>(offset)] = e[t];
    }
  }

  std::vector<double> wx = w;
  const std::size_t n = w.size();
  for (int h = 0; h < horizon; ++h) {
    const std::size_t t = n + static_cast<std::size_t>(h);
    double pred = model.mean;
    for (std::size_t l = 1; l <= poly.ar.size(); ++l) pred += poly.ar[l - 1] * (wx[t - l] - model.mean);
    for (std::size_t l = 1; l <= poly.ma.size(); ++l) {
      if (t - l < n) pred += poly.ma[l - 1] * e[t - l];
    }
    wx.push_back(pred);
  }

  const auto delta = differencing_polynomial(model.order.d, model.order.D, s);
  std::vector<double> y(series.begin(), series.end());
  for (int h = 0; h < horizon; ++h) {
    const std::size_t t = series.size() + static_cast<std::size_t>(h);
    double v = wx[n + static_cast<std::size_t>(h)];
    for (std::size_t l = 1; l <= delta.size(); ++l) v += delta[l - 1] * y[t - l];
    y.push_back(v);
  }
  return {y.begin() + static_cast<std::ptrdiff_t>(series.size()), y.end()};
}

double kpss_statistic(std::span<const double> series) {
  const auto n = series.size();
  if (n < 3) return 0.0;
  const double mean = std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(n);
  std::vector<double> e(n);
  for (std::size_t t = 0; t < n; ++t) e[t] = series[t] - mean;
  const auto lags = static_cast<std::size_t>(std::trunc(12.0 * std::pow(static_cast<double>(n) / 100.0, 0.25)));
  double lrv = 0.0;
  for (double v : e) lrv += v * v;
  for (std::size_t l = 1; l <= lags && l < n; ++l) {
    double acc = 0.0;
    for (std::size_t t = l; t < n; ++t) acc += e[t] * e[t - l];
    lrv += 2.0 * (1.0 - static_cast<double>(l) / static_cast<double>(lags + 1)) * acc;
  }
  lrv /= static_cast<double>(n);
  if (!(lrv > 1e-12 * (1.0 + mean * mean))) return 0.0;
  double partial = 0.0, stat = 0.0;
  for (double v : e) {
    partial += v;
    stat += partial * partial;
  }
  return stat / (static_cast<double>(n) * static_cast<double>(n) * lrv);
}

double seasonal_strength(std::span<const double> series, int period) {
  const auto n = static_cast<int>(series.size());
  if (period < 2 || n < 2 * period + 1) return 0.0;
  // centred moving average of length `period` (2 x period for even periods)
  const int half = period / 2;
  std::vector<double> detrended;
  std::vector<int> position;
  for (int t = half; t < n - half; ++t) {
    double trend = 0.0;
    if (period % 2 == 1) {
      for (int j = -half; j <= half; ++j) trend += series[static_cast<std::size_t>(t + j)];
      trend /= period;
    } else {
      for (int j = -half; j <= half; ++j) {
        const double w = (j == -half || j == half) ? 0.5 : 1.0;
        trend += w * series[static_cast<std::size_t>(t + j)];
      }
      trend /= period;
    }
    detrended.push_back(series[static_cast<std::size_t>(t)] - trend);
    position.push_back(t % period);
  }
  std::vector<double> sums(static_cast<std::size_t>(period), 0.0);
  std::vector<int> counts(static_cast<std::size_t>(period), 0);
  for (std::size_t i = 0; i < detrended.size(); ++i) {
    sums[static_cast<std::size_t>(position[i])] += detrended[i];
    ++counts[static_cast<std::size_t>(position[i])];
  }
  double centre = 0.0;
  for (int j = 0; j < period; ++j) {
    sums[static_cast<std::size_t>(j)] /= std::max(1, counts[static_cast<std::size_t>(j)]);
    centre += sums[static_cast<std::size_t>(j)] / period;
  }
  std::vector<double> remainder(detrended.size());
  for (std::size_t i = 0; i < detrended.size(); ++i) {
    remainder[i] = detrended[i] - (sums[static_cast<std::size_t>(position[i])] - centre);
  }
  const double var_detrended = variance(detrended);
  if (var_detrended <= 1e-12) return 0.0;
  return std::clamp(1.0 - variance(remainder) / var_detrended, 0.0, 1.0);
}

SeasonalHandling seasonal_handling(int steps_per_day) {
  if (steps_per_day <= 1) return {SeasonalHandling::Kind::kSeasonalModel, 7, 0};
  if (steps_per_day >= 8) return {SeasonalHandling::Kind::kFourier, steps_per_day, 6};
  return {SeasonalHandling::Kind::kFourier, 7 * steps_per_day, 3};
}

namespace {

struct ArimaChoice {
  ArmaSpec model;
  bool found = false;
};

ArimaChoice search_arima(std::span<const double> x, int period, bool seasonal, int D) {
  const std::vector<double> base = difference(x, 0, D, std::max(1, period));
  const int d = kpss_statistic(base) > kKpssCritical5pct ? 1 : 0;
  const bool include_mean = d + D == 0;
  const int max_seasonal = seasonal ? 1 : 0;
  const int condition = 3 + max_seasonal * std::max(1, period);
  ArimaChoice best;
  for (int p = 0; p <= 3; ++p) {
    for (int q = 0; q <= 3; ++q) {
      for (int P = 0; P <= max_seasonal; ++P) {
        for (int Q = 0; Q <= max_seasonal; ++Q) {
          ArimaOrder order{p, d, q, P, D, Q, seasonal ? period : 0};
          ArmaSpec fit;
          try {
            fit = fit_arima_css(x, order, include_mean, condition);
          } catch (const std::invalid_argument&) {
            continue;
          }
          if (!fit.converged) continue;
          if (!best.found || fit.bic < best.model.bic) {
            best.model = fit;
            best.found = true;
          }
        }
      }
    }
  }
  return best;
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

SeriesForecast fallback(std::span<const double> series, int naive_season, int horizon, const std::string& why) {
  auto f = seasonal_naive_forecast(series, std::min<int>(naive_season, static_cast<int>(series.size())), horizon);
  f.fallback = true;
  f.model += " (fallback: " + why + ")";
  return f;
}

}  // namespace

SeriesForecast sarima_forecast(std::span<const double> series, const SeasonalHandling& handling, int horizon,
                               int naive_season) {
  using Kind = SeasonalHandling::Kind;
  const auto n = static_cast<int>(series.size());
  if (handling.kind == Kind::kSeasonalModel) {
    if (n < 4 * handling.period) return fallback(series, naive_season, horizon, "series shorter than four seasons");
    const int D = seasonal_strength(series, handling.period) > kSeasonalStrengthThreshold ? 1 : 0;
    const auto choice = search_arima(series, handling.period, true, D);
    if (!choice.found) return fallback(series, naive_season, horizon, "no ARIMA candidate converged");
    SeriesForecast f;
    f.forecast = arima_forecast(choice.model, series, horizon, &f.residuals);
    f.model = choice.model.order.describe();
    if (!all_finite(f.forecast)) return fallback(series, naive_season, horizon, "non-finite forecast");
    return f;
  }

  std::vector<double> target(series.begin(), series.end());
  FourierSpec fourier;
  if (handling.kind == Kind::kFourier) {
    if (n < 2 * handling.period) return fallback(series, naive_season, horizon, "series shorter than two periods");
    auto ff = fit_fourier(series, handling.period, handling.max_harmonics);
    fourier = ff.spec;
    target = std::move(ff.residuals);
  }
  const auto choice = search_arima(target, 0, false, 0);
  if (!choice.found) return fallback(series, naive_season, horizon, "no ARIMA candidate converged");
  SeriesForecast f;
  f.forecast = arima_forecast(choice.model, target, horizon, &f.residuals);
  if (handling.kind == Kind::kFourier) {
    for (int h = 0; h < horizon; ++h) f.forecast[static_cast<std::size_t>(h)] += fourier.value_at(n + h + 1);
    f.model = "fourier[" + std::to_string(fourier.period) + ",S=" + std::to_string(fourier.harmonics) + "]+" +
              choice.model.order.describe();
  } else {
    f.model = choice.model.order.describe();
  }
  if (!all_finite(f.forecast)) return fallback(series, naive_season, horizon, "non-finite forecast");
  return f;
}

}  // namespace ctrecon
