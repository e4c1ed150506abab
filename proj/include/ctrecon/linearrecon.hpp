#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ctrecon/forecast_set.hpp"
#include "ctrecon/hierarchy.hpp"

namespace ctrecon {

/// In-sample residuals of one reconciliation view: rows are time points,
/// columns are series. `groups` optionally assigns columns to pooled blocks
/// (one block per temporal order in a temporal view).
struct ResidualSet {
  Eigen::MatrixXd values;
  std::vector<int> groups;

  /// Drops rows holding any non-finite entry.
  ResidualSet complete_rows() const;
};

enum class CovarianceKind { kIdentity, kWlsv, kShrinkage };
std::string to_string(CovarianceKind kind);

struct CovarianceEstimate {
  CovarianceKind kind = CovarianceKind::kIdentity;
  Eigen::MatrixXd W;
  double lambda = 1.0;  // shrinkage intensity (1 for diagonal estimators)
  std::vector<std::string> flags;
};

CovarianceEstimate identity_covariance(Eigen::Index dim);

/// Diagonal of population variances (denominator = row count), pooled within
/// groups when the set defines them. Zero-variance entries take the smallest
/// positive variance (1 if all are zero) and raise a flag.
CovarianceEstimate estimate_wlsv(const ResidualSet& residuals);

/// lambda * diag(S) + (1 - lambda) * S with S the unbiased sample covariance
/// and lambda the Schafer-Strimmer intensity computed on the correlation scale.
CovarianceEstimate estimate_shrinkage(const ResidualSet& residuals);

/// Projection onto the column space of S under the metric W^{-1}:
/// b = (S' W^{-1} S)^{-1} S' W^{-1} y, reconciled = S b.
class GlsProjector {
 public:
  GlsProjector(const Eigen::MatrixXd& S, const Eigen::MatrixXd& W);
  /// Columns of `base` are reconciled independently.
  Eigen::MatrixXd bottom(const Eigen::MatrixXd& base) const;
  Eigen::MatrixXd reconcile(const Eigen::MatrixXd& base) const;
  bool jittered() const { return jittered_; }

 private:
  Eigen::MatrixXd S_;
  Eigen::MatrixXd gain_;  // (S' W^{-1} S)^{-1} S' W^{-1}
  bool jittered_ = false;
};

Eigen::VectorXd gls_reconcile(const Eigen::VectorXd& base, const Eigen::MatrixXd& S, const CovarianceEstimate& W);

/// S_cs (x) S_te for the stacked node-major layout of CrossTemporalForecast::stacked().
Eigen::MatrixXd cross_temporal_summing_matrix(const Hierarchy& hierarchy, const TemporalScheme& scheme);

/// Residual views built from a base set's in-sample residuals.
ResidualSet cross_sectional_residuals(const CrossTemporalForecast& residuals, std::size_t order_index);
ResidualSet temporal_residuals(const CrossTemporalForecast& residuals, std::size_t node);
ResidualSet cross_temporal_residuals(const CrossTemporalForecast& residuals);

enum class LinearMethod { kBottomUp, kTcs, kCst, kIte, kOct };
std::string to_string(LinearMethod method);
std::optional<LinearMethod> parse_linear_method(const std::string& name);

struct LinearOptions {
  CovarianceKind temporal = CovarianceKind::kWlsv;
  CovarianceKind cross_sectional = CovarianceKind::kShrinkage;
  CovarianceKind cross_temporal = CovarianceKind::kWlsv;
  double ite_tolerance = 1e-6;
  int ite_max_iterations = 100;
};

struct LinearDiagnostics {
  int iterations = 0;
  bool converged = true;
  double last_change = 0.0;
  /// Relative coherence gap of the last linear iterate before the bottom-up rebuild.
  double raw_incoherence = 0.0;
  std::vector<std::string> flags;
};

/// Rebuilds every position from the rounded bottom order-1 base forecasts.
ReconciledForecastSet bottom_up(const BaseForecastSet& base, const Hierarchy& hierarchy, const TemporalScheme& scheme);

/// Linear benchmark reconciliation. The final forecasts are rounded at the
/// bottom order-1 level and re-aggregated; `unrounded` keeps the coherent
/// linear output.
ReconciledForecastSet reconcile(LinearMethod method, const BaseForecastSet& base, const Hierarchy& hierarchy,
                                const TemporalScheme& scheme, const LinearOptions& options = {},
                                LinearDiagnostics* diagnostics = nullptr);

/// Rounds bottom order-1 values with max(0, round) and rebuilds all positions.
CrossTemporalForecast round_and_rebuild(const CrossTemporalForecast& coherent, const Hierarchy& hierarchy,
                                        const TemporalScheme& scheme);

}  // namespace ctrecon
