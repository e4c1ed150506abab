#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "ctrecon/mlrecon.hpp"
#include "ctrecon/util.hpp"

namespace ctrecon {

std::string to_string(FeatureVariant variant) {
  return variant == FeatureVariant::kCompact ? "compact" : "complete";
}

FeatureVariant parse_feature_variant(const std::string& name) {
  if (name == "compact") return FeatureVariant::kCompact;
  if (name == "complete") return FeatureVariant::kComplete;
  throw std::invalid_argument("unknown feature variant '" + name + "' (expected compact|complete)");
}

namespace {

void push_column(FeatureLayout& layout, const Hierarchy& h, std::size_t node, int order) {
  layout.nodes.push_back(node);
  layout.orders.push_back(order);
  layout.names.push_back(h.id(node) + "@" + std::to_string(order));
}

std::size_t expected_width(const Hierarchy& h, const TemporalScheme& scheme, FeatureVariant variant) {
  return variant == FeatureVariant::kCompact ? h.size() + scheme.p() - 1 : h.size() * scheme.p();
}

}  // namespace

FeatureLayout FeatureLayout::make(const Hierarchy& h, const TemporalScheme& scheme, FeatureVariant variant,
                                  std::optional<std::size_t> focal_node) {
  FeatureLayout layout;
  layout.variant = variant;
  const auto& orders = scheme.orders();
  if (variant == FeatureVariant::kComplete) {
    for (int k : orders) {
      for (std::size_t node = 0; node < h.size(); ++node) push_column(layout, h, node, k);
    }
    return layout;
  }
  if (!focal_node || *focal_node >= h.size() || !h.is_bottom(*focal_node)) {
    throw std::invalid_argument("compact features need a bottom focal node");
  }
  for (std::size_t node = 0; node < h.size(); ++node) {
    if (node != *focal_node) push_column(layout, h, node, orders.front());
  }
  push_column(layout, h, *focal_node, orders.front());
  for (std::size_t oi = 1; oi < orders.size(); ++oi) push_column(layout, h, *focal_node, orders[oi]);
  return layout;
}

FeatureLayout FeatureLayout::from_names(const std::vector<std::string>& names, const Hierarchy& h,
                                        const TemporalScheme& scheme, FeatureVariant variant) {
  if (names.size() != expected_width(h, scheme, variant)) {
    throw std::invalid_argument("feature layout: " + std::to_string(names.size()) + " names do not fit the " +
                                to_string(variant) + " variant");
  }
  FeatureLayout layout;
  layout.variant = variant;
  for (const auto& name : names) {
    const auto at = name.rfind('@');
    if (at == std::string::npos) throw std::invalid_argument("feature layout: malformed name '" + name + "'");
    const auto node = h.index_of(name.substr(0, at));
    const int order = std::stoi(name.substr(at + 1));
    if (!node || !scheme.has_order(order)) throw std::invalid_argument("feature layout: unknown column '" + name + "'");
    push_column(layout, h, *node, order);
  }
  return layout;
}

Eigen::MatrixXd feature_rows(const CrossTemporalForecast& f, const FeatureLayout& layout) {
  f.check_complete();
  const Eigen::Index rows = static_cast<Eigen::Index>(f.m) * f.periods;
  Eigen::MatrixXd X(rows, static_cast<Eigen::Index>(layout.width()));
  for (std::size_t j = 0; j < layout.width(); ++j) {
    const int k = layout.orders[j];
    const auto oi = static_cast<std::size_t>(std::find(f.orders.begin(), f.orders.end(), k) - f.orders.begin());
    if (oi == f.orders.size() || layout.nodes[j] * f.p() >= f.values.size()) {
      throw std::invalid_argument("feature_rows: forecasts lack column " + layout.names[j]);
    }
    const auto& v = f.at(layout.nodes[j], oi);
    for (Eigen::Index t = 0; t < rows; ++t) X(t, static_cast<Eigen::Index>(j)) = v[static_cast<std::size_t>(t / k)];
  }
  return X;
}

FeatureMatrix build_features(std::span<const CrossTemporalForecast> windows, std::span<const SeriesMatrix> actual_bottom,
                             const Hierarchy& h, const TemporalScheme& scheme, FeatureVariant variant,
                             std::optional<std::size_t> focal_bottom) {
  if (windows.empty()) throw std::invalid_argument("build_features: no validation windows");
  if (!actual_bottom.empty() && actual_bottom.size() != windows.size()) {
    throw std::invalid_argument("build_features: one actual block per window is required");
  }
  if (focal_bottom && *focal_bottom >= h.bottom_count()) throw std::invalid_argument("build_features: bad bottom index");
  std::optional<std::size_t> focal_node;
  if (focal_bottom) focal_node = h.aggregate_count() + *focal_bottom;
  if (!actual_bottom.empty() && !focal_bottom) throw std::invalid_argument("build_features: target needs a focal node");

  FeatureMatrix fm;
  fm.layout = FeatureLayout::make(h, scheme, variant, focal_node);
  std::vector<Eigen::MatrixXd> blocks;
  Eigen::Index rows = 0;
  for (const auto& w : windows) {
    if (w.m != scheme.m() || w.orders != scheme.orders() || w.nodes != h.node_ids()) {
      throw std::invalid_argument("build_features: window does not match the hierarchy");
    }
    blocks.push_back(feature_rows(w, fm.layout));
    rows += blocks.back().rows();
  }
  fm.X.resize(rows, static_cast<Eigen::Index>(fm.layout.width()));
  if (!actual_bottom.empty()) fm.y.resize(rows);
  Eigen::Index at = 0;
  for (std::size_t w = 0; w < blocks.size(); ++w) {
    const Eigen::Index r = blocks[w].rows();
    fm.X.middleRows(at, r) = blocks[w];
    if (!actual_bottom.empty()) {
      const auto& a = actual_bottom[w];
      if (a.rows() != static_cast<Eigen::Index>(h.bottom_count()) || a.cols() != r) {
        throw std::invalid_argument("build_features: actual block shape does not match window " + std::to_string(w));
      }
      fm.y.segment(at, r) = a.row(static_cast<Eigen::Index>(*focal_bottom)).transpose();
    }
    fm.fold.insert(fm.fold.end(), static_cast<std::size_t>(r), static_cast<int>(w));
    at += r;
  }
  return fm;
}

std::string to_string(TuneMode mode) {
  switch (mode) {
    case TuneMode::kOff: return "off";
    case TuneMode::kGrid: return "grid";
    case TuneMode::kRandom: return "random";
  }
  return "unknown";
}

TuneMode parse_tune_mode(const std::string& name) {
  if (name == "off") return TuneMode::kOff;
  if (name == "grid") return TuneMode::kGrid;
  if (name == "random") return TuneMode::kRandom;
  throw std::invalid_argument("unknown tune mode '" + name + "' (expected off|grid|random)");
}

namespace {

std::vector<EnsembleParams> grid_candidates(EnsembleFamily family, int d) {
  std::vector<EnsembleParams> out;
  const auto base = EnsembleParams::defaults(family);
  if (family == EnsembleFamily::kRandomForest) {
    std::set<int> mtry{std::min(2, d), std::clamp(d / 3, 1, 50), std::min(50, d)};
    for (int m : mtry) {
      for (int nodesize : {5, 20, 50}) {
        auto p = base;
        p.rf.mtry = m;
        p.rf.nodesize = nodesize;
        out.push_back(p);
      }
    }
    return out;
  }
  for (int depth : {2, 6, 10}) {
    for (double eta : {0.01, 0.05}) {
      for (int rounds : {50, 200}) {
        auto p = base;
        p.gbm.max_depth = depth;
        p.gbm.learning_rate = eta;
        p.gbm.nrounds = rounds;
        out.push_back(p);
      }
    }
  }
  return out;
}

EnsembleParams random_candidate(EnsembleFamily family, int d, std::mt19937_64& rng) {
  auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto integer = [&rng](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto p = EnsembleParams::defaults(family);
  if (family == EnsembleFamily::kRandomForest) {
    p.rf.mtry = std::min(integer(2, 50), d);
    p.rf.nodesize = integer(5, 50);
    p.rf.ntree = 50 + 10 * integer(0, 45);
    return p;
  }
  auto& g = p.gbm;
  g.max_depth = integer(2, 10);
  g.learning_rate = uniform(0.01, 0.05);
  g.subsample = uniform(0.3, 1.0);
  g.colsample = uniform(0.3, 1.0);
  g.min_child_weight = uniform(0.0, 10.0);
  g.nrounds = integer(50, 200);
  if (family == EnsembleFamily::kGbmLeafwise) {
    g.num_leaves = integer(5, 31);
    g.lambda_l1 = uniform(0.0, 5.0);
  } else {
    g.min_split_gain = uniform(0.0, 5.0);
  }
  return p;
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& X, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(rows[i]);
  return out;
}

double mse(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).squaredNorm() / static_cast<double>(a.size()); }

}  // namespace

std::vector<EnsembleParams> tuning_candidates(EnsembleFamily family, std::size_t features, const TuneOptions& options) {
  if (options.mode == TuneMode::kOff) return {EnsembleParams::defaults(family)};
  if (options.budget < 1) throw std::invalid_argument("tune: budget must be at least 1");
  const int d = std::max(1, static_cast<int>(features));
  if (options.mode == TuneMode::kGrid) {
    auto grid = grid_candidates(family, d);
    if (grid.size() > static_cast<std::size_t>(options.budget)) grid.resize(static_cast<std::size_t>(options.budget));
    return grid;
  }
  std::mt19937_64 rng(derive_seed(options.seed, {static_cast<std::uint64_t>(family)}));
  std::vector<EnsembleParams> out;
  for (int i = 0; i < options.budget; ++i) out.push_back(random_candidate(family, d, rng));
  return out;
}

double cross_validated_rmse(const FeatureMatrix& fm, const EnsembleParams& params, std::uint64_t seed, int threads) {
  if (fm.fold.size() != static_cast<std::size_t>(fm.rows())) throw std::invalid_argument("cv: fold labels missing");
  std::set<int> folds(fm.fold.begin(), fm.fold.end());
  if (folds.size() < 2) throw std::invalid_argument("cv: at least two validation windows are required");
  double total = 0.0;
  for (int f : folds) {
    std::vector<int> train, test;
    for (std::size_t i = 0; i < fm.fold.size(); ++i) (fm.fold[i] == f ? test : train).push_back(static_cast<int>(i));
    FeatureMatrix sub;
    sub.layout = fm.layout;
    sub.X = select_rows(fm.X, train);
    sub.y.resize(static_cast<Eigen::Index>(train.size()));
    for (std::size_t i = 0; i < train.size(); ++i) sub.y(static_cast<Eigen::Index>(i)) = fm.y(train[i]);
    const auto model = train_ensemble(sub, params, derive_seed(seed, {static_cast<std::uint64_t>(f)}), threads);
    const Eigen::MatrixXd Xt = select_rows(fm.X, test);
    Eigen::VectorXd yt(static_cast<Eigen::Index>(test.size()));
    for (std::size_t i = 0; i < test.size(); ++i) yt(static_cast<Eigen::Index>(i)) = fm.y(test[i]);
    total += std::sqrt(mse(model.predict(Xt), yt));
  }
  return total / static_cast<double>(folds.size());
}

TuneResult tune_candidates(const FeatureMatrix& fm, const std::vector<EnsembleParams>& candidates, std::uint64_t seed,
                           int threads) {
  if (candidates.empty()) throw std::invalid_argument("tune: empty candidate set");
  TuneResult result;
  result.candidates = candidates;
  if (candidates.size() == 1) {
    result.best = candidates.front();
    result.cv_rmse = {std::numeric_limits<double>::quiet_NaN()};
    return result;
  }
  std::size_t best = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    result.cv_rmse.push_back(cross_validated_rmse(fm, candidates[i], seed, threads));
    if (result.cv_rmse[i] < result.cv_rmse[best]) best = i;
  }
  result.best = candidates[best];
  return result;
}

TuneResult tune(EnsembleFamily family, const FeatureMatrix& fm, const TuneOptions& options) {
  return tune_candidates(fm, tuning_candidates(family, static_cast<std::size_t>(fm.X.cols()), options), options.seed,
                         options.threads);
}

ReconciledForecastSet reconcile_ml(const std::vector<TreeEnsemble>& models, const CrossTemporalForecast& oos_base,
                                   const Hierarchy& h, const TemporalScheme& scheme, FeatureVariant variant,
                                   const std::string& method_name, const std::string& base_method,
                                   const std::string& window_id) {
  if (models.size() != h.bottom_count()) {
    throw std::invalid_argument("reconcile_ml: expected " + std::to_string(h.bottom_count()) + " models, got " +
                                std::to_string(models.size()));
  }
  if (oos_base.m != scheme.m() || oos_base.orders != scheme.orders() || oos_base.nodes != h.node_ids()) {
    throw std::invalid_argument("reconcile_ml: base forecasts do not match the hierarchy");
  }
  const Eigen::Index cols = static_cast<Eigen::Index>(oos_base.m) * oos_base.periods;
  SeriesMatrix raw(static_cast<Eigen::Index>(h.bottom_count()), cols);
  Eigen::MatrixXd complete_rows;
  if (variant == FeatureVariant::kComplete) complete_rows = feature_rows(oos_base, FeatureLayout::make(h, scheme, variant));
  for (std::size_t b = 0; b < h.bottom_count(); ++b) {
    const auto layout = FeatureLayout::make(h, scheme, variant, h.aggregate_count() + b);
    const auto& model = models[b];
    if (!model.feature_names.empty() && model.feature_names != layout.names) {
      throw std::invalid_argument("reconcile_ml: model " + std::to_string(b) + " was trained on a different layout");
    }
    const Eigen::VectorXd pred =
        model.predict(variant == FeatureVariant::kComplete ? complete_rows : feature_rows(oos_base, layout));
    raw.row(static_cast<Eigen::Index>(b)) = pred.transpose();
  }
  SeriesMatrix rounded = raw.unaryExpr([](double v) { return round_nonnegative(v); });
  ReconciledForecastSet out;
  out.forecasts = rebuild_from_bottom(rounded, h, scheme);
  out.unrounded = rebuild_from_bottom(raw, h, scheme);
  out.method = method_name;
  out.base_method = base_method;
  out.window_id = window_id;
  return out;
}

std::vector<double> permutation_importance(const TreeEnsemble& model, const FeatureMatrix& fm, int repeats,
                                           std::uint64_t seed) {
  if (fm.rows() < 2) throw std::invalid_argument("permutation_importance: at least two rows are required");
  if (fm.y.size() != fm.rows()) throw std::invalid_argument("permutation_importance: target required");
  repeats = std::max(1, repeats);
  const auto d = static_cast<std::size_t>(fm.X.cols());
  std::vector<bool> used(d, false);
  for (const auto& t : model.trees) {
    for (int f : t.used_features()) used[static_cast<std::size_t>(f)] = true;
  }
  const double baseline = mse(model.predict(fm.X), fm.y);
  std::vector<double> score(d, 0.0);
  Eigen::MatrixXd work = fm.X;
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(fm.rows()));
  for (std::size_t j = 0; j < d; ++j) {
    if (!used[j]) continue;
    const auto col = static_cast<Eigen::Index>(j);
    double acc = 0.0;
    for (int r = 0; r < repeats; ++r) {
      std::iota(perm.begin(), perm.end(), Eigen::Index{0});
      std::mt19937_64 rng(derive_seed(seed, {j, static_cast<std::uint64_t>(r)}));
      std::shuffle(perm.begin(), perm.end(), rng);
      for (Eigen::Index i = 0; i < fm.rows(); ++i) work(i, col) = fm.X(perm[static_cast<std::size_t>(i)], col);
      acc += mse(model.predict(work), fm.y) - baseline;
    }
    work.col(col) = fm.X.col(col);
    score[j] = std::max(0.0, acc / repeats);
  }
  const double total = std::accumulate(score.begin(), score.end(), 0.0);
  if (total > 0.0) {
    for (auto& s : score) s /= total;
  }
  return score;
}

}  // namespace ctrecon
