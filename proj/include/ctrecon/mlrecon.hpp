#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ctrecon/forecast_set.hpp"
#include "ctrecon/hierarchy.hpp"

namespace ctrecon {

enum class FeatureVariant { kCompact, kComplete };
std::string to_string(FeatureVariant variant);
FeatureVariant parse_feature_variant(const std::string& name);

/// Column j of a feature matrix holds the forecast of `nodes[j]` at temporal
/// order `orders[j]`, replicated down to the order-1 grid. Names are "node@k".
struct FeatureLayout {
  FeatureVariant variant = FeatureVariant::kCompact;
  std::vector<std::size_t> nodes;  // Hierarchy indices
  std::vector<int> orders;
  std::vector<std::string> names;

  std::size_t width() const { return names.size(); }

  /// Compact: order-1 columns of every node with the focal bottom node last,
  /// then the focal node at the remaining orders (n + p - 1 columns).
  /// Complete: every node at order 1, then every node at each coarser order (p * n columns).
  static FeatureLayout make(const Hierarchy& hierarchy, const TemporalScheme& scheme, FeatureVariant variant,
                            std::optional<std::size_t> focal_node = std::nullopt);
  /// Rebuilds a layout from its column names.
  static FeatureLayout from_names(const std::vector<std::string>& names, const Hierarchy& hierarchy,
                                  const TemporalScheme& scheme, FeatureVariant variant);
};

struct FeatureMatrix {
  FeatureLayout layout;
  Eigen::MatrixXd X;         // rows = order-1 slots, columns = features
  Eigen::VectorXd y;         // actual bottom order-1 values (empty when unknown)
  std::vector<int> fold;     // validation window index of each row

  Eigen::Index rows() const { return X.rows(); }
};

/// Feature rows for one forecast window: m * periods rows.
Eigen::MatrixXd feature_rows(const CrossTemporalForecast& forecasts, const FeatureLayout& layout);

/// Stacks the R validation windows. `actual_bottom` holds, per window, the
/// n_b x (m*H) actual order-1 bottom values; the target is the focal node's row.
/// Pass an empty span to build features without a target.
FeatureMatrix build_features(std::span<const CrossTemporalForecast> windows, std::span<const SeriesMatrix> actual_bottom,
                             const Hierarchy& hierarchy, const TemporalScheme& scheme, FeatureVariant variant,
                             std::optional<std::size_t> focal_bottom);

/// Binary regression tree; x goes left when x[feature] <= threshold.
struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(const double* row, Eigen::Index stride) const;
  int leaf_count() const;
  int depth() const;
  std::vector<int> used_features() const;
};

enum class EnsembleFamily { kRandomForest, kGbmDepthwise, kGbmLeafwise };
std::string to_string(EnsembleFamily family);
EnsembleFamily parse_ensemble_family(const std::string& name);

struct RandomForestParams {
  int ntree = 500;
  int mtry = 0;      // 0: floor(features / 3), at least 1
  int nodesize = 5;  // nodes with at most this many rows become leaves
  bool bootstrap = true;
};

enum class GrowthPolicy { kDepthwise, kLeafwise };

struct GbmParams {
  GrowthPolicy growth = GrowthPolicy::kDepthwise;
  int nrounds = 100;
  double learning_rate = 0.3;
  int max_depth = 6;     // <= 0: unlimited
  int num_leaves = 0;    // leaf-wise only; <= 0: unlimited
  double subsample = 1.0;
  double colsample = 1.0;
  double min_child_weight = 1.0;
  int min_data_in_leaf = 0;
  double lambda_l2 = 1.0;
  double lambda_l1 = 0.0;
  double min_split_gain = 0.0;

  static GbmParams depthwise_defaults();
  static GbmParams leafwise_defaults();
};

struct EnsembleParams {
  EnsembleFamily family = EnsembleFamily::kRandomForest;
  RandomForestParams rf;
  GbmParams gbm;

  static EnsembleParams defaults(EnsembleFamily family);
  std::string describe() const;
  bool operator==(const EnsembleParams& o) const;
};

struct TreeEnsemble {
  EnsembleParams params;
  std::vector<RegressionTree> trees;
  double base_score = 0.0;  // gbm: training-target mean; rf: unused
  std::uint64_t seed = 0;
  std::vector<std::string> feature_names;

  double predict(const double* row, Eigen::Index stride) const;
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;

  std::string to_json() const;
  static TreeEnsemble from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static TreeEnsemble load(const std::filesystem::path& path);
};

TreeEnsemble train_random_forest(const FeatureMatrix& fm, const RandomForestParams& params, std::uint64_t seed,
                                 int threads = 1);
TreeEnsemble train_gbm(const FeatureMatrix& fm, const GbmParams& params, std::uint64_t seed);
TreeEnsemble train_ensemble(const FeatureMatrix& fm, const EnsembleParams& params, std::uint64_t seed,
                            int threads = 1);

enum class TuneMode { kOff, kGrid, kRandom };
std::string to_string(TuneMode mode);
TuneMode parse_tune_mode(const std::string& name);

struct TuneOptions {
  TuneMode mode = TuneMode::kRandom;
  int budget = 10;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct TuneResult {
  EnsembleParams best;
  std::vector<EnsembleParams> candidates;
  std::vector<double> cv_rmse;  // one per candidate
};

/// Candidates sampled within the documented bounds of each family.
std::vector<EnsembleParams> tuning_candidates(EnsembleFamily family, std::size_t features, const TuneOptions& options);

/// Mean RMSE over folds, each validation window left out once.
double cross_validated_rmse(const FeatureMatrix& fm, const EnsembleParams& params, std::uint64_t seed, int threads = 1);

/// Picks the candidate with the lowest CV RMSE (the earliest on ties).
TuneResult tune_candidates(const FeatureMatrix& fm, const std::vector<EnsembleParams>& candidates,
                           std::uint64_t seed, int threads = 1);
TuneResult tune(EnsembleFamily family, const FeatureMatrix& fm, const TuneOptions& options);

/// Revised bottom forecasts from one model per bottom node (Hierarchy bottom
/// order), rounded and aggregated over the whole cross-temporal tree.
ReconciledForecastSet reconcile_ml(const std::vector<TreeEnsemble>& models, const CrossTemporalForecast& oos_base,
                                   const Hierarchy& hierarchy, const TemporalScheme& scheme, FeatureVariant variant,
                                   const std::string& method_name, const std::string& base_method = "",
                                   const std::string& window_id = "");

/// Mean increase in MSE when one column is shuffled, negatives clipped to 0
/// and the scores normalised to sum to 1.
std::vector<double> permutation_importance(const TreeEnsemble& model, const FeatureMatrix& fm, int repeats,
                                           std::uint64_t seed);

}  // namespace ctrecon
