#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ctrecon/forecast_set.hpp"
#include "ctrecon/hierarchy.hpp"

namespace ctrecon {

/// sum|A - F| / sum A; missing when the actual total is not positive.
std::optional<double> wape(std::span<const double> actual, std::span<const double> forecast);

/// Test MAE over the in-sample MAE of the lag-`lag` seasonal naive. Missing
/// when the in-sample series is no longer than `lag` or its naive MAE is 0.
std::optional<double> mase(std::span<const double> test_actual, std::span<const double> test_forecast,
                           std::span<const double> insample_actual, int lag);

struct AccuracyRow {
  std::string method;
  std::string node;
  std::string level;
  int order = 1;
  std::optional<double> wape;
  std::optional<double> mase;
  std::string period = "all";
};

struct AccuracyTable {
  std::vector<AccuracyRow> rows;

  void append(const AccuracyTable& other);
  /// method,node,level,order,wape,mase,period; missing values are empty fields.
  std::string to_csv(bool header = true) const;
  static AccuracyTable from_csv(const std::string& text);
  std::optional<double> value(const std::string& method, const std::string& node, int order, bool use_wape,
                              const std::string& period = "all") const;
};

/// Per (node, order) metrics of one method. `forecast` and `actual` span the
/// pooled test slots; `insample` holds the actuals preceding the test set.
/// The MASE lag at order k is 7 * m / k.
AccuracyTable evaluate_forecasts(const std::string& method, const CrossTemporalForecast& forecast,
                                 const CrossTemporalForecast& actual, const CrossTemporalForecast& insample,
                                 const Hierarchy& hierarchy, const TemporalScheme& scheme,
                                 const std::string& period = "all");

struct LevelRow {
  std::string method;
  std::string level;
  int order = 1;
  std::optional<double> wape;
  std::optional<double> mase;
  std::string period = "all";
};

/// Unweighted member means per (method, level, order, period); any missing
/// member makes the mean missing. Levels run bottom-first.
std::vector<LevelRow> level_summary(const AccuracyTable& table, const Hierarchy& hierarchy,
                                    const TemporalScheme& scheme);

/// Method rows with one column per order, one block per level.
std::string level_table_csv(const std::vector<LevelRow>& rows, const TemporalScheme& scheme, bool use_wape);

/// q_{alpha,M} / sqrt(2) for M in [2, 20] and alpha in {0.05, 0.10}.
double nemenyi_q(int methods, double alpha);

struct McbResult {
  std::vector<std::string> methods;
  std::vector<double> average_ranks;
  std::optional<double> critical_distance;  // absent with fewer than two usable series
  std::size_t best = 0;
  std::vector<bool> significantly_worse;
  std::size_t series_used = 0;
  double alpha = 0.05;

  /// method,average_rank,lower,upper,significantly_worse
  std::string to_csv() const;
};

/// Ranks each series' errors (1 = smallest, mid-ranks on ties), columns with a
/// NaN entry are dropped. A method is significantly worse when its interval
/// rank +/- CD/2 does not overlap the best method's.
McbResult mcb_test(const Eigen::MatrixXd& errors, const std::vector<std::string>& methods, double alpha = 0.05);

}  // namespace ctrecon
