#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ctrecon/baseforecast.hpp"
#include "ctrecon/data.hpp"
#include "ctrecon/evaluate.hpp"
#include "ctrecon/linearrecon.hpp"
#include "ctrecon/mlrecon.hpp"

namespace ctrecon {

/// Rolling-window geometry in days: estimation length Q, horizon H, R inner
/// validation windows and the outer advance `step`.
struct WindowPlan {
  int Q = 140;
  int H = 7;
  int R = 4;
  int step = 7;

  int N() const { return Q + R * H; }
  /// Outer iterations that fit in `panel_days`; throws with the shortfall when none fit.
  int outer_count(int panel_days) const;
  std::string describe() const;

  static WindowPlan london() { return {140, 7, 4, 7}; }
  static WindowPlan citibike() { return {140, 1, 28, 1}; }
};

struct OuterIteration {
  int index = 0;
  std::vector<ForecastWindow> validation;  // R windows; validation days follow each estimation range
  ForecastWindow final_fit;                // estimation length N, test = the H days after it

  int test_start() const { return final_fit.start_day + final_fit.estimation_days; }
};

std::vector<OuterIteration> plan_windows(int panel_days, const WindowPlan& plan);

BaseForecastSet base_set_from_json(const std::string& text);
std::string base_set_to_json(const BaseForecastSet& set);

/// Content-addressed store of base forecast sets, in memory and optionally on
/// disk. Safe for concurrent use. Unreadable disk entries count as misses and
/// are removed.
class BaseForecastCache {
 public:
  explicit BaseForecastCache(bool enabled = true, std::optional<std::filesystem::path> directory = std::nullopt);

  static std::string key(std::uint64_t panel_hash, const Hierarchy& hierarchy, const TemporalScheme& scheme,
                         const std::string& method, const ForecastWindow& window);

  std::optional<BaseForecastSet> get(const std::string& key);
  void put(const std::string& key, const BaseForecastSet& set);
  BaseForecastSet get_or_compute(const std::string& key, const std::function<BaseForecastSet()>& compute);

  bool enabled() const { return enabled_; }
  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }
  std::size_t evictions() const { return evictions_; }

 private:
  std::filesystem::path path_for(const std::string& key) const;

  bool enabled_;
  std::optional<std::filesystem::path> directory_;
  std::mutex mutex_;
  std::map<std::string, std::string> memory_;  // key -> serialized set
  std::atomic<std::size_t> hits_{0}, misses_{0}, evictions_{0};
};

/// Reconciliation methods: bu, tcs, cst, ite, oct (linear) and rf, xgb, lgbm (tree ensembles).
bool is_ml_method(const std::string& recon);
EnsembleFamily ml_family(const std::string& recon);

struct ExperimentConfig {
  std::filesystem::path panel;
  std::filesystem::path hierarchy;
  int m = 48;
  std::vector<int> orders{1, 2, 48};
  std::vector<std::string> base{"naive"};
  std::vector<std::string> recon{"bu", "rf"};
  WindowPlan plan;
  std::optional<int> max_outer;
  FeatureVariant features = FeatureVariant::kCompact;
  TuneOptions tune{TuneMode::kOff, 10, 1, 1};
  std::map<std::string, EnsembleParams> ml_params;  // per recon name; defaults when absent
  std::uint64_t seed = 1;
  int threads = 1;
  std::filesystem::path output = "results";
  std::optional<std::pair<int, int>> periods;  // day indices from panel start: [d1, d2) is "during"
  bool cache = true;
  std::optional<std::filesystem::path> cache_dir;
  bool importance = true;
  int importance_repeats = 1;

  TemporalScheme scheme() const { return TemporalScheme(m, orders); }
  EnsembleParams params_for(const std::string& recon) const;

  /// Relative paths in the file are resolved against `base_dir`.
  static ExperimentConfig from_json(const std::string& text, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
  std::string to_json() const;
  /// Hash of every field that can change results (threads and output excluded).
  std::uint64_t hash() const;
  void validate() const;
};

struct MethodError {
  std::string method;
  int outer = 0;
  std::string message;
};

struct ImportanceRow {
  std::string method;
  std::string node;
  std::string feature;
  double score = 0.0;
};

struct ExperimentResult {
  std::vector<std::string> methods;  // "base:recon" labels, base forecasts as "base:base"
  std::vector<std::string> window_ids;
  std::vector<int> test_days;  // absolute day index of every pooled test day
  std::map<std::string, std::vector<CrossTemporalForecast>> forecasts;  // per method, one per outer iteration
  CrossTemporalForecast actual;                                          // pooled test actuals
  AccuracyTable metrics;
  std::vector<LevelRow> levels;
  std::vector<std::pair<std::string, McbResult>> mcb;  // per base method
  std::vector<ImportanceRow> importance;
  std::vector<MethodError> errors;
  std::vector<std::size_t> cache_hits_per_outer;
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;
  std::size_t fallback_series = 0;
};

/// Period label of a day for the configured split: pre, during or post.
std::string period_of(int day, const std::pair<int, int>& periods);

ExperimentResult run_experiment(const Panel& panel, const Hierarchy& hierarchy, const ExperimentConfig& config,
                                BaseForecastCache* cache = nullptr);
/// Loads the panel and hierarchy named in the config.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// metrics.csv, levels_wape.csv, levels_mase.csv, forecasts/*.csv, scatter.csv,
/// importance.csv, mcb.csv, errors.csv and manifest.json under `dir`.
void write_outputs(const ExperimentResult& result, const ExperimentConfig& config, const Panel& panel,
                   const Hierarchy& hierarchy, const std::filesystem::path& dir);

/// Variant / reference ratios of two level tables (level_table_csv layout),
/// over the orders both share. Rows keep the reference order.
std::string ratio_table_csv(const std::string& reference_levels, const std::string& variant_levels);

std::string scatter_csv(const ExperimentResult& result, const Hierarchy& hierarchy, const TemporalScheme& scheme);

}  // namespace ctrecon
