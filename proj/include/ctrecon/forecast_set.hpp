#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "ctrecon/hierarchy.hpp"

namespace ctrecon {

/// Values for every (node, temporal order) of a cross-temporal hierarchy over
/// `periods` top-level periods. Series for order k have length (m/k)*periods.
/// Nodes follow Hierarchy order, orders ascend.
struct CrossTemporalForecast {
  std::vector<std::string> nodes;
  std::vector<int> orders;
  int m = 1;
  int periods = 0;
  std::vector<std::vector<double>> values;  // [node * p + order_index]

  static CrossTemporalForecast zeros(const Hierarchy& hierarchy, const TemporalScheme& scheme, int periods);

  std::size_t p() const { return orders.size(); }
  std::size_t length(std::size_t order_index) const {
    return static_cast<std::size_t>(m / orders[order_index] * periods);
  }
  std::vector<double>& at(std::size_t node, std::size_t order_index) { return values[node * p() + order_index]; }
  const std::vector<double>& at(std::size_t node, std::size_t order_index) const {
    return values[node * p() + order_index];
  }
  /// Throws unless every (node, order) vector is present with the right length.
  void check_complete() const;

  /// One column per top-level period, rows in stacked cross-temporal order:
  /// node-major, and within a node orders from coarsest to k=1.
  Eigen::MatrixXd stacked() const;
  void set_from_stacked(const Eigen::MatrixXd& stacked);

  /// Order-1 bottom block as an n_b x (m*periods) matrix.
  SeriesMatrix bottom_order1(const Hierarchy& hierarchy) const;
};

/// Rebuilds the whole cross-temporal tree by summing bottom order-1 values.
CrossTemporalForecast rebuild_from_bottom(const SeriesMatrix& bottom_order1, const Hierarchy& hierarchy,
                                          const TemporalScheme& scheme);

/// Largest absolute gap between any position and the sum of its bottom
/// order-1 constituents, and the same gap relative to max(1, |value|).
struct CoherenceReport {
  double max_abs = 0.0;
  double max_rel = 0.0;
};
CoherenceReport coherence_error(const CrossTemporalForecast& f, const Hierarchy& hierarchy, const TemporalScheme& scheme);
bool is_exactly_coherent(const CrossTemporalForecast& f, const Hierarchy& hierarchy, const TemporalScheme& scheme);

/// Base forecasts for one window plus the in-sample one-step residuals of the
/// fitted models (NaN where a model has no residual, e.g. the first week of
/// the seasonal naive). Residual vectors span the estimation sample at each order.
struct BaseForecastSet {
  CrossTemporalForecast forecasts;
  CrossTemporalForecast residuals;  // periods = estimation length
  std::string method;               // e.g. "naive", "sarima+fallback"
  std::string window_id;
  std::vector<bool> fallback;  // per (node, order); true when a fit fell back to the seasonal naive

  std::size_t fallback_count() const;
};

struct ReconciledForecastSet {
  CrossTemporalForecast forecasts;  // final, rounded and coherent
  std::optional<CrossTemporalForecast> unrounded;  // direct output of the last linear step
  std::string method;
  std::string base_method;
  std::string window_id;
};

/// CSV: node,order,step,value,method,window_id[,recon_method]
std::string forecasts_to_csv(const CrossTemporalForecast& f, const std::string& method, const std::string& window_id,
                             const std::optional<std::string>& recon_method = std::nullopt, bool header = true);
std::string to_csv(const BaseForecastSet& set, bool header = true);
std::string to_csv(const ReconciledForecastSet& set, bool header = true);

/// Parses the CSV schema above back into a forecast (method/window from the
/// first row). Needs the hierarchy and scheme to size the result.
struct ParsedForecastCsv {
  CrossTemporalForecast forecasts;
  std::string method;
  std::string window_id;
  std::string recon_method;
};
ParsedForecastCsv forecasts_from_csv(const std::string& text, const Hierarchy& hierarchy, const TemporalScheme& scheme);

}  // namespace ctrecon
