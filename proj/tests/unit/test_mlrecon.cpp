#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ctrecon/mlrecon.hpp"
#include "ctrecon/util.hpp"

using namespace ctrecon;

namespace {

Hierarchy london_like() {
  HierarchySpec spec;
  spec.records.push_back({"M", "", "market"});
  for (int z = 0; z < 18; ++z) spec.records.push_back({"Z" + std::to_string(z), "M", "zone"});
  for (int a = 0; a < 117; ++a) spec.records.push_back({"A" + std::to_string(a), "Z" + std::to_string(a % 18), "area"});
  return Hierarchy::build(spec);
}

Hierarchy two_leaves() { return Hierarchy::build(HierarchySpec::two_level("M", {"a", "b"})); }

// Every node's order-1 row temporally aggregated on its own; no cross-sectional constraint.
CrossTemporalForecast per_node(const Eigen::MatrixXd& order1, const Hierarchy& h, const TemporalScheme& scheme) {
  const int periods = static_cast<int>(order1.cols()) / scheme.m();
  auto f = CrossTemporalForecast::zeros(h, scheme, periods);
  for (std::size_t node = 0; node < h.size(); ++node) {
    std::vector<double> row(order1.cols());
    for (Eigen::Index t = 0; t < order1.cols(); ++t) row[static_cast<std::size_t>(t)] = order1(static_cast<Eigen::Index>(node), t);
    for (std::size_t oi = 0; oi < scheme.p(); ++oi) f.at(node, oi) = temporal_aggregate(row, scheme.orders()[oi]);
  }
  return f;
}

Eigen::MatrixXd random_counts(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, int hi = 9) {
  std::uniform_int_distribution<int> d(0, hi);
  return Eigen::MatrixXd::NullaryExpr(rows, cols, [&] { return static_cast<double>(d(rng)); });
}

FeatureMatrix random_fixture(int n, int d, std::uint64_t seed, bool noisy = true) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> e(0.0, noisy ? 0.3 : 0.0);
  FeatureMatrix fm;
  fm.X = Eigen::MatrixXd::NullaryExpr(n, d, [&] { return u(rng); });
  fm.y.resize(n);
  for (int i = 0; i < n; ++i) {
    fm.y(i) = 3.0 * std::sin(6.0 * fm.X(i, 0)) + (d > 1 ? 2.0 * fm.X(i, 1) * fm.X(i, 1) : 0.0) + e(rng);
  }
  for (int i = 0; i < n; ++i) fm.fold.push_back(i % 4);
  for (int j = 0; j < d; ++j) fm.layout.names.push_back("x" + std::to_string(j));
  return fm;
}

double mse(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).squaredNorm() / a.size(); }

// Maps an integer-valued feature to itself over [0, top].
RegressionTree passthrough_tree(int feature, int top) {
  RegressionTree t;
  for (int v = 0; v < top; ++v) {
    const int self = static_cast<int>(t.nodes.size());
    t.nodes.push_back({feature, v + 0.5, self + 1, self + 2, 0.0});
    t.nodes.push_back({-1, 0.0, -1, -1, static_cast<double>(v)});
  }
  t.nodes.push_back({-1, 0.0, -1, -1, static_cast<double>(top)});
  return t;
}

void expect_same_trees(const TreeEnsemble& a, const TreeEnsemble& b) {
  ASSERT_EQ(a.trees.size(), b.trees.size());
  for (std::size_t t = 0; t < a.trees.size(); ++t) {
    ASSERT_EQ(a.trees[t].nodes.size(), b.trees[t].nodes.size());
    for (std::size_t k = 0; k < a.trees[t].nodes.size(); ++k) {
      const auto &x = a.trees[t].nodes[k], &y = b.trees[t].nodes[k];
      EXPECT_EQ(x.feature, y.feature);
      EXPECT_EQ(x.threshold, y.threshold);
      EXPECT_EQ(x.left, y.left);
      EXPECT_EQ(x.right, y.right);
      EXPECT_DOUBLE_EQ(x.value, y.value);
    }
  }
}

}  // namespace

TEST(Features, LondonShapes) {
  const auto h = london_like();
  const TemporalScheme scheme(34, {1, 2, 34});
  std::mt19937_64 rng(3);
  std::vector<CrossTemporalForecast> windows;
  std::vector<SeriesMatrix> actual;
  for (int w = 0; w < 4; ++w) {
    windows.push_back(per_node(random_counts(136, 34 * 7, rng), h, scheme));
    actual.push_back(random_counts(117, 34 * 7, rng));
  }
  const auto compact = build_features(windows, actual, h, scheme, FeatureVariant::kCompact, 5);
  const auto complete = build_features(windows, actual, h, scheme, FeatureVariant::kComplete, 5);
  EXPECT_EQ(compact.X.cols(), 138);
  EXPECT_EQ(complete.X.cols(), 408);
  EXPECT_EQ(compact.rows(), 952);
  EXPECT_EQ(complete.rows(), 952);
  EXPECT_EQ(compact.fold.front(), 0);
  EXPECT_EQ(compact.fold.back(), 3);
  EXPECT_EQ(compact.y(238), actual[1](5, 0));
}

TEST(Features, CompactColumnOrder) {
  const auto h = two_leaves();
  const TemporalScheme scheme(4, {1, 2, 4});
  const auto layout = FeatureLayout::make(h, scheme, FeatureVariant::kCompact, 1);
  const std::vector<std::string> expected{"M@1", "b@1", "a@1", "a@2", "a@4"};
  EXPECT_EQ(layout.names, expected);
  const auto full = FeatureLayout::make(h, scheme, FeatureVariant::kComplete);
  const std::vector<std::string> all{"M@1", "a@1", "b@1", "M@2", "a@2", "b@2", "M@4", "a@4", "b@4"};
  EXPECT_EQ(full.names, all);
  EXPECT_THROW(FeatureLayout::make(h, scheme, FeatureVariant::kCompact, 0), std::invalid_argument);
  EXPECT_THROW(FeatureLayout::make(h, scheme, FeatureVariant::kCompact), std::invalid_argument);
}

TEST(Features, CoarseValuesReplicated) {
  const auto h = two_leaves();
  const TemporalScheme scheme(4, {1, 2, 4});
  std::mt19937_64 rng(1);
  const auto f = per_node(random_counts(3, 8, rng), h, scheme);
  const auto layout = FeatureLayout::make(h, scheme, FeatureVariant::kCompact, 2);
  const auto X = feature_rows(f, layout);
  ASSERT_EQ(X.rows(), 8);
  for (int day = 0; day < 2; ++day) {
    for (int s = 0; s < 4; ++s) {
      EXPECT_EQ(X(4 * day + s, 4), f.at(2, 2)[static_cast<std::size_t>(day)]);
      EXPECT_EQ(X(4 * day + s, 3), f.at(2, 1)[static_cast<std::size_t>((4 * day + s) / 2)]);
      EXPECT_EQ(X(4 * day + s, 2), f.at(2, 0)[static_cast<std::size_t>(4 * day + s)]);
    }
  }
}

TEST(Features, LayoutRebuiltFromNames) {
  const auto h = london_like();
  const TemporalScheme scheme(34, {1, 2, 34});
  for (auto variant : {FeatureVariant::kCompact, FeatureVariant::kComplete}) {
    const auto layout = FeatureLayout::make(h, scheme, variant, 40);
    const auto back = FeatureLayout::from_names(layout.names, h, scheme, variant);
    EXPECT_EQ(back.names, layout.names);
    EXPECT_EQ(back.nodes, layout.nodes);
    EXPECT_EQ(back.orders, layout.orders);
  }
  auto names = FeatureLayout::make(h, scheme, FeatureVariant::kCompact, 40).names;
  EXPECT_THROW(FeatureLayout::from_names(names, h, scheme, FeatureVariant::kComplete), std::invalid_argument);
  names[0] = "nowhere@1";
  EXPECT_THROW(FeatureLayout::from_names(names, h, scheme, FeatureVariant::kCompact), std::invalid_argument);
}

TEST(Features, MismatchedWindowRejected) {
  const auto h = two_leaves();
  const TemporalScheme scheme(4, {1, 2, 4});
  const TemporalScheme other(4, {1, 4});
  std::vector<CrossTemporalForecast> windows{CrossTemporalForecast::zeros(h, other, 1)};
  EXPECT_THROW(build_features(windows, {}, h, scheme, FeatureVariant::kCompact, 0), std::invalid_argument);
  std::vector<CrossTemporalForecast> ok{CrossTemporalForecast::zeros(h, scheme, 1)};
  std::vector<SeriesMatrix> wrong{SeriesMatrix::Zero(2, 3)};
  EXPECT_THROW(build_features(ok, wrong, h, scheme, FeatureVariant::kCompact, 0), std::invalid_argument);
}

TEST(RandomForest, ConstantTarget) {
  auto fm = random_fixture(40, 3, 2);
  fm.y.setConstant(4.0);
  RandomForestParams p;
  p.ntree = 20;
  const auto model = train_random_forest(fm, p, 7);
  for (const auto& t : model.trees) EXPECT_EQ(t.nodes.size(), 1u);
  EXPECT_TRUE((model.predict(fm.X).array() == 4.0).all());
}

TEST(RandomForest, SingleSplitRecovery) {
  FeatureMatrix fm;
  fm.X.resize(20, 1);
  fm.y.resize(20);
  for (int i = 0; i < 20; ++i) {
    fm.X(i, 0) = i;
    fm.y(i) = i < 12 ? 1.5 : -2.0;
  }
  RandomForestParams p;
  p.ntree = 1;
  p.bootstrap = false;
  const auto model = train_random_forest(fm, p, 1);
  ASSERT_EQ(model.trees[0].nodes.size(), 3u);
  EXPECT_EQ(model.trees[0].nodes[0].threshold, 11.5);
  EXPECT_EQ(model.predict(fm.X), fm.y);
}

TEST(RandomForest, PredictionIsMeanOfTrees) {
  const auto fm = random_fixture(60, 4, 5);
  RandomForestParams p;
  p.ntree = 25;
  const auto model = train_random_forest(fm, p, 3);
  EXPECT_EQ(model.params.rf.mtry, 1);
  for (Eigen::Index i = 0; i < fm.rows(); ++i) {
    double acc = 0.0;
    for (const auto& t : model.trees) acc += t.predict(fm.X.data() + i, fm.rows());
    EXPECT_DOUBLE_EQ(model.predict(fm.X.data() + i, fm.rows()), acc / 25.0);
  }
}

TEST(RandomForest, NodesizeBoundsSplitting) {
  const auto fm = random_fixture(30, 2, 8);
  RandomForestParams p;
  p.ntree = 1;
  p.bootstrap = false;
  p.nodesize = 30;
  EXPECT_EQ(train_random_forest(fm, p, 1).trees[0].nodes.size(), 1u);
  p.nodesize = 29;
  EXPECT_GT(train_random_forest(fm, p, 1).trees[0].nodes.size(), 1u);
}

TEST(Ensembles, TrainingMseBelowMeanPredictor) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto fm = random_fixture(120, 5, seed);
    const double baseline = mse(Eigen::VectorXd::Constant(fm.rows(), fm.y.mean()), fm.y);
    for (auto family : {EnsembleFamily::kRandomForest, EnsembleFamily::kGbmDepthwise, EnsembleFamily::kGbmLeafwise}) {
      auto params = EnsembleParams::defaults(family);
      params.rf.ntree = 50;
      const auto model = train_ensemble(fm, params, seed);
      EXPECT_LE(mse(model.predict(fm.X), fm.y), baseline) << to_string(family);
    }
  }
}

TEST(Gbm, ZeroRoundsPredictsMean) {
  const auto fm = random_fixture(50, 3, 4);
  auto p = GbmParams::depthwise_defaults();
  p.nrounds = 0;
  const auto model = train_gbm(fm, p, 1);
  EXPECT_TRUE(model.trees.empty());
  EXPECT_TRUE((model.predict(fm.X).array() == fm.y.mean()).all());
}

TEST(Gbm, ConstantTargetGivesNullTrees) {
  auto fm = random_fixture(50, 3, 4);
  fm.y.setConstant(2.5);
  for (auto p : {GbmParams::depthwise_defaults(), GbmParams::leafwise_defaults()}) {
    const auto model = train_gbm(fm, p, 1);
    EXPECT_DOUBLE_EQ(model.base_score, 2.5);
    for (const auto& t : model.trees) EXPECT_EQ(t.nodes.size(), 1u);
    EXPECT_LE((model.predict(fm.X).array() - 2.5).abs().maxCoeff(), 1e-12);
  }
}

TEST(Gbm, RateOneDrivesResidualsToZero) {
  const auto fm = random_fixture(50, 3, 11, false);
  auto p = GbmParams::depthwise_defaults();
  p.learning_rate = 1.0;
  p.max_depth = 0;
  p.nrounds = 200;
  const auto model = train_gbm(fm, p, 1);
  EXPECT_LE((model.predict(fm.X) - fm.y).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Gbm, TwoLeafLeafwiseEqualsDepthOneStump) {
  const auto fm = random_fixture(80, 4, 6);
  auto depth = GbmParams::depthwise_defaults();
  depth.max_depth = 1;
  auto leaf = depth;
  leaf.growth = GrowthPolicy::kLeafwise;
  leaf.max_depth = 0;
  leaf.num_leaves = 2;
  const auto a = train_gbm(fm, depth, 9);
  const auto b = train_gbm(fm, leaf, 9);
  expect_same_trees(a, b);
  for (const auto& t : b.trees) EXPECT_LE(t.leaf_count(), 2);
}

TEST(Gbm, LeafBudgetAndDepthRespected) {
  const auto fm = random_fixture(200, 4, 6);
  auto leaf = GbmParams::leafwise_defaults();
  leaf.num_leaves = 7;
  leaf.min_data_in_leaf = 1;
  for (const auto& t : train_gbm(fm, leaf, 1).trees) EXPECT_LE(t.leaf_count(), 7);
  auto depth = GbmParams::depthwise_defaults();
  depth.max_depth = 3;
  for (const auto& t : train_gbm(fm, depth, 1).trees) EXPECT_LE(t.depth(), 3);
}

TEST(Ensembles, DeterministicAcrossThreads) {
  const auto fm = random_fixture(100, 6, 12);
  RandomForestParams p;
  p.ntree = 40;
  EXPECT_EQ(train_random_forest(fm, p, 77, 1).to_json(), train_random_forest(fm, p, 77, 4).to_json());
  auto g = GbmParams::depthwise_defaults();
  g.subsample = 0.6;
  g.colsample = 0.5;
  EXPECT_EQ(train_gbm(fm, g, 5).to_json(), train_gbm(fm, g, 5).to_json());
  EXPECT_NE(train_gbm(fm, g, 5).to_json(), train_gbm(fm, g, 6).to_json());
}

TEST(Ensembles, JsonRoundTrip) {
  const auto fm = random_fixture(80, 3, 13);
  for (auto family : {EnsembleFamily::kRandomForest, EnsembleFamily::kGbmDepthwise, EnsembleFamily::kGbmLeafwise}) {
    auto params = EnsembleParams::defaults(family);
    params.rf.ntree = 10;
    const auto model = train_ensemble(fm, params, 21);
    const auto back = TreeEnsemble::from_json(model.to_json());
    EXPECT_EQ(back.to_json(), model.to_json());
    EXPECT_TRUE(back.params == model.params);
    EXPECT_EQ(back.seed, model.seed);
    EXPECT_EQ(back.feature_names, fm.layout.names);
    EXPECT_EQ(back.predict(fm.X), model.predict(fm.X));
  }
  EXPECT_THROW(TreeEnsemble::from_json("{\"format\":\"other\"}"), std::invalid_argument);
}

TEST(Tune, BudgetOneReturnsSampledCandidate) {
  const auto fm = random_fixture(80, 3, 14);
  TuneOptions opt;
  opt.budget = 1;
  const auto candidates = tuning_candidates(EnsembleFamily::kGbmDepthwise, 3, opt);
  ASSERT_EQ(candidates.size(), 1u);
  const auto result = tune(EnsembleFamily::kGbmDepthwise, fm, opt);
  EXPECT_TRUE(result.best == candidates[0]);
}

TEST(Tune, DefaultsOnlyReturnsDefaults) {
  const auto fm = random_fixture(80, 3, 14);
  TuneOptions opt;
  opt.mode = TuneMode::kOff;
  const auto result = tune(EnsembleFamily::kRandomForest, fm, opt);
  EXPECT_TRUE(result.best == EnsembleParams::defaults(EnsembleFamily::kRandomForest));
}

TEST(Tune, SmallerNodesizeWinsOnWigglyTarget) {
  const auto fm = random_fixture(160, 1, 15, false);
  auto small = EnsembleParams::defaults(EnsembleFamily::kRandomForest);
  small.rf.ntree = 50;
  auto large = small;
  large.rf.nodesize = 50;
  const double cv_small = cross_validated_rmse(fm, small, 3);
  const double cv_large = cross_validated_rmse(fm, large, 3);
  ASSERT_LT(cv_small, cv_large);
  const auto result = tune_candidates(fm, {large, small}, 3);
  EXPECT_EQ(result.best.rf.nodesize, 5);
  EXPECT_DOUBLE_EQ(result.cv_rmse[1], cv_small);
}

TEST(Tune, RandomCandidatesWithinBounds) {
  TuneOptions opt;
  opt.budget = 200;
  for (const auto& p : tuning_candidates(EnsembleFamily::kRandomForest, 138, opt)) {
    EXPECT_GE(p.rf.mtry, 2);
    EXPECT_LE(p.rf.mtry, 50);
    EXPECT_GE(p.rf.nodesize, 5);
    EXPECT_LE(p.rf.nodesize, 50);
    EXPECT_GE(p.rf.ntree, 50);
    EXPECT_LE(p.rf.ntree, 500);
    EXPECT_EQ(p.rf.ntree % 10, 0);
  }
  for (auto family : {EnsembleFamily::kGbmDepthwise, EnsembleFamily::kGbmLeafwise}) {
    for (const auto& p : tuning_candidates(family, 138, opt)) {
      const auto& g = p.gbm;
      EXPECT_GE(g.max_depth, 2);
      EXPECT_LE(g.max_depth, 10);
      EXPECT_GE(g.learning_rate, 0.01);
      EXPECT_LE(g.learning_rate, 0.05);
      EXPECT_GE(g.subsample, 0.3);
      EXPECT_GE(g.colsample, 0.3);
      EXPECT_LE(g.min_child_weight, 10.0);
      EXPECT_GE(g.nrounds, 50);
      EXPECT_LE(g.nrounds, 200);
      if (family == EnsembleFamily::kGbmLeafwise) {
        EXPECT_GE(g.num_leaves, 5);
        EXPECT_LE(g.num_leaves, 31);
        EXPECT_LE(g.lambda_l1, 5.0);
      }
    }
  }
  opt.budget = 0;
  EXPECT_THROW(tuning_candidates(EnsembleFamily::kRandomForest, 10, opt), std::invalid_argument);
}

TEST(Tune, SingleFoldRejected) {
  auto fm = random_fixture(40, 2, 1);
  std::fill(fm.fold.begin(), fm.fold.end(), 0);
  EXPECT_THROW(cross_validated_rmse(fm, EnsembleParams::defaults(EnsembleFamily::kGbmDepthwise), 1),
               std::invalid_argument);
}

TEST(ReconcileMl, PassthroughGivesRoundedBottomUp) {
  const auto h = two_leaves();
  const TemporalScheme scheme(4, {1, 2, 4});
  std::mt19937_64 rng(4);
  const auto base = per_node(random_counts(3, 12, rng), h, scheme);
  std::vector<TreeEnsemble> models;
  for (std::size_t b = 0; b < 2; ++b) {
    const auto layout = FeatureLayout::make(h, scheme, FeatureVariant::kCompact, h.aggregate_count() + b);
    TreeEnsemble m;
    m.params.rf.ntree = 1;
    m.feature_names = layout.names;
    m.trees.push_back(passthrough_tree(static_cast<int>(h.size()) - 1, 9));
    models.push_back(m);
  }
  const auto out = reconcile_ml(models, base, h, scheme, FeatureVariant::kCompact, "rf", "naive", "w0");
  const auto expected = rebuild_from_bottom(base.bottom_order1(h), h, scheme);
  EXPECT_EQ(out.forecasts.values, expected.values);
  EXPECT_TRUE(is_exactly_coherent(out.forecasts, h, scheme));
  EXPECT_EQ(out.method, "rf");
  EXPECT_EQ(out.base_method, "naive");
}

TEST(ReconcileMl, ZeroBaseAndZeroTarget) {
  const auto h = two_leaves();
  const TemporalScheme scheme(4, {1, 2, 4});
  std::vector<CrossTemporalForecast> windows(4, CrossTemporalForecast::zeros(h, scheme, 2));
  std::vector<SeriesMatrix> actual(4, SeriesMatrix::Zero(2, 8));
  std::vector<TreeEnsemble> models;
  for (std::size_t b = 0; b < 2; ++b) {
    const auto fm = build_features(windows, actual, h, scheme, FeatureVariant::kCompact, b);
    models.push_back(train_gbm(fm, GbmParams::depthwise_defaults(), 1));
  }
  const auto out = reconcile_ml(models, windows[0], h, scheme, FeatureVariant::kCompact, "xgb");
  for (const auto& v : out.forecasts.values) {
    for (double x : v) EXPECT_EQ(x, 0.0);
  }
}

TEST(ReconcileMl, LearnsHalfOfParent) {
  const auto h = two_leaves();
  const TemporalScheme scheme(4, {1, 2, 4});
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<int> parent(10, 60);
  std::normal_distribution<double> noise(0.0, 6.0);
  std::vector<CrossTemporalForecast> windows;
  std::vector<SeriesMatrix> actual;
  for (int w = 0; w < 5; ++w) {
    Eigen::MatrixXd order1(3, 28);
    SeriesMatrix truth(2, 28);
    for (int t = 0; t < 28; ++t) {
      const double p = 2.0 * parent(rng);
      order1(0, t) = p;
      for (int b = 0; b < 2; ++b) {
        truth(b, t) = p / 2.0;
        order1(b + 1, t) = std::max(0.0, std::round(p / 2.0 + noise(rng)));
      }
    }
    windows.push_back(per_node(order1, h, scheme));
    actual.push_back(truth);
  }
  const std::span<const CrossTemporalForecast> train(windows.data(), 4);
  const std::span<const SeriesMatrix> target(actual.data(), 4);
  std::vector<TreeEnsemble> models;
  auto params = EnsembleParams::defaults(EnsembleFamily::kRandomForest);
  params.rf.ntree = 100;
  for (std::size_t b = 0; b < 2; ++b) {
    const auto fm = build_features(train, target, h, scheme, FeatureVariant::kCompact, b);
    models.push_back(train_ensemble(fm, params, derive_seed(1, {b})));
  }
  const auto out = reconcile_ml(models, windows[4], h, scheme, FeatureVariant::kCompact, "rf");
  const auto revised = out.forecasts.bottom_order1(h);
  const auto base = windows[4].bottom_order1(h);
  const double rmse_ml = std::sqrt((revised - actual[4]).squaredNorm() / 56.0);
  const double rmse_base = std::sqrt((base - actual[4]).squaredNorm() / 56.0);
  EXPECT_LT(rmse_ml, rmse_base);
  EXPECT_TRUE(is_exactly_coherent(out.forecasts, h, scheme));
}

TEST(ReconcileMl, LayoutMismatchRejected) {
  const auto h = two_leaves();
  const TemporalScheme scheme(4, {1, 2, 4});
  std::vector<TreeEnsemble> models(2);
  for (std::size_t b = 0; b < 2; ++b) {
    models[b].feature_names = FeatureLayout::make(h, scheme, FeatureVariant::kCompact, 1 + b).names;
    models[b].trees.push_back(RegressionTree{{TreeNode{}}});
  }
  const auto base = CrossTemporalForecast::zeros(h, scheme, 1);
  EXPECT_THROW(reconcile_ml(models, base, h, scheme, FeatureVariant::kComplete, "rf"), std::invalid_argument);
  models.pop_back();
  EXPECT_THROW(reconcile_ml(models, base, h, scheme, FeatureVariant::kCompact, "rf"), std::invalid_argument);
}

TEST(Importance, UnusedFeatureScoresZero) {
  auto fm = random_fixture(100, 3, 16);
  TreeEnsemble m;
  m.params.rf.ntree = 1;
  m.trees.push_back(passthrough_tree(0, 1));
  fm.y = m.predict(fm.X);
  const auto s = permutation_importance(m, fm, 3, 1);
  EXPECT_EQ(s[1], 0.0);
  EXPECT_EQ(s[2], 0.0);
}

TEST(Importance, SingleFeatureNormalisesToOne) {
  const auto fm = random_fixture(100, 1, 17);
  RandomForestParams p;
  p.ntree = 20;
  const auto model = train_random_forest(fm, p, 1);
  const auto s = permutation_importance(model, fm, 3, 1);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_DOUBLE_EQ(s[0], 1.0);
}

TEST(Importance, DeterminingFeatureRanksFirst) {
  auto fm = random_fixture(150, 2, 18);
  fm.y = (10.0 * fm.X.col(0).array()).matrix();
  RandomForestParams p;
  p.ntree = 50;
  p.mtry = 2;
  const auto model = train_random_forest(fm, p, 2);
  const auto s = permutation_importance(model, fm, 5, 3);
  EXPECT_GT(s[0], s[1]);
  EXPECT_NEAR(s[0] + s[1], 1.0, 1e-12);
  EXPECT_EQ(s, permutation_importance(model, fm, 5, 3));
}
