#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "ctrecon/csv.hpp"
#include "ctrecon/mlrecon.hpp"
#include "ctrecon/util.hpp"

namespace ctrecon {

namespace {

using Rng = std::mt19937_64;

struct SplitConfig {
  double lambda_l2 = 0.0;
  double lambda_l1 = 0.0;
  double min_child_weight = 0.0;
  int min_data = 1;
  double min_gain = 0.0;
  double gain_factor = 1.0;  // 0.5 for the boosting objective
  double noise_floor = 0.0;  // gains below this are rounding noise
};

struct Split {
  bool valid = false;
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

double soft_threshold(double g, double alpha) {
  if (g > alpha) return g - alpha;
  if (g < -alpha) return g + alpha;
  return 0.0;
}

double score(double G, double H, const SplitConfig& c) {
  const double t = soft_threshold(G, c.lambda_l1);
  return t * t / (H + c.lambda_l2);
}

// Best split of rows idx over `features`; lowest feature then lowest threshold wins ties.
Split best_split(const Eigen::MatrixXd& X, const std::vector<double>& g, std::span<const int> idx,
                 std::span<const int> features, const SplitConfig& c, std::vector<int>& scratch) {
  Split best;
  const auto n = static_cast<double>(idx.size());
  if (idx.size() < 2) return best;
  double G = 0.0;
  for (int i : idx) G += g[static_cast<std::size_t>(i)];
  const double parent = score(G, n, c);
  const double floor = c.min_gain + c.noise_floor;
  scratch.assign(idx.begin(), idx.end());
  for (int f : features) {
    const double* col = X.col(f).data();
    std::sort(scratch.begin(), scratch.end(), [col](int a, int b) { return col[a] < col[b]; });
    double GL = 0.0;
    for (std::size_t k = 0; k + 1 < scratch.size(); ++k) {
      GL += g[static_cast<std::size_t>(scratch[k])];
      const double lo = col[scratch[k]], hi = col[scratch[k + 1]];
      if (!(lo < hi)) continue;
      const auto nl = static_cast<double>(k + 1), nr = n - nl;
      if (nl < c.min_data || nr < c.min_data || nl < c.min_child_weight || nr < c.min_child_weight) continue;
      const double gain = c.gain_factor * (score(GL, nl, c) + score(G - GL, nr, c) - parent);
      if (gain > floor && (!best.valid || gain > best.gain)) {
        double thr = lo + (hi - lo) / 2.0;
        if (!(thr < hi)) thr = lo;
        best = {true, f, thr, gain};
      }
    }
  }
  return best;
}

struct GrowConfig {
  SplitConfig split;
  int max_depth = 0;       // <= 0 unlimited
  int max_leaves = 0;      // <= 0 unlimited
  int terminal_size = 0;   // rows <= terminal_size never split
  bool leafwise = false;
  int mtry = 0;            // features drawn per node; 0 = all of `features`
  double leaf_scale = 1.0;
};

struct Leaf {
  int node;
  std::size_t begin, end;
  int depth;
  Split split;
};

class TreeGrower {
 public:
  TreeGrower(const Eigen::MatrixXd& X, const std::vector<double>& g, const GrowConfig& cfg,
             std::vector<int> features, Rng* rng)
      : X_(X), g_(g), cfg_(cfg), features_(std::move(features)), rng_(rng) {}

  RegressionTree grow(std::vector<int> rows) {
    rows_ = std::move(rows);
    tree_.nodes.clear();
    tree_.nodes.push_back(TreeNode{});
    std::vector<Leaf> open;
    open.push_back(make_leaf(0, 0, rows_.size(), 0));
    int leaves = 1;
    if (cfg_.leafwise) {
      while (cfg_.max_leaves <= 0 || leaves < cfg_.max_leaves) {
        int pick = -1;
        for (std::size_t i = 0; i < open.size(); ++i) {
          if (open[i].split.valid && (pick < 0 || open[i].split.gain > open[static_cast<std::size_t>(pick)].split.gain)) {
            pick = static_cast<int>(i);
          }
        }
        if (pick < 0) break;
        const Leaf leaf = open[static_cast<std::size_t>(pick)];
        open.erase(open.begin() + pick);
        auto [l, r] = split_leaf(leaf);
        open.push_back(l);
        open.push_back(r);
        ++leaves;
      }
    } else {
      // breadth-first so that a leaf budget, if any, is spent level by level
      std::size_t head = 0;
      while (head < open.size()) {
        const Leaf leaf = open[head++];
        if (!leaf.split.valid || (cfg_.max_leaves > 0 && leaves >= cfg_.max_leaves)) continue;
        auto [l, r] = split_leaf(leaf);
        open.push_back(l);
        open.push_back(r);
        ++leaves;
      }
    }
    return std::move(tree_);
  }

 private:
  Leaf make_leaf(int node, std::size_t begin, std::size_t end, int depth) {
    double G = 0.0;
    for (std::size_t k = begin; k < end; ++k) G += g_[static_cast<std::size_t>(rows_[k])];
    const auto H = static_cast<double>(end - begin);
    auto& tn = tree_.nodes[static_cast<std::size_t>(node)];
    tn.feature = -1;
    tn.value = H > 0 ? cfg_.leaf_scale * soft_threshold(G, cfg_.split.lambda_l1) / (H + cfg_.split.lambda_l2) : 0.0;
    Leaf leaf{node, begin, end, depth, {}};
    const bool depth_ok = cfg_.max_depth <= 0 || depth < cfg_.max_depth;
    const bool size_ok = static_cast<int>(end - begin) > cfg_.terminal_size;
    if (depth_ok && size_ok) {
      const std::span<const int> idx(rows_.data() + begin, end - begin);
      leaf.split = best_split(X_, g_, idx, candidate_features(), cfg_.split, scratch_);
    }
    return leaf;
  }

  std::vector<int> candidate_features() {
    if (cfg_.mtry <= 0 || cfg_.mtry >= static_cast<int>(features_.size())) return features_;
    std::vector<int> pool = features_;
    for (int i = 0; i < cfg_.mtry; ++i) {
      std::uniform_int_distribution<int> pick(i, static_cast<int>(pool.size()) - 1);
      std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(*rng_))]);
    }
    pool.resize(static_cast<std::size_t>(cfg_.mtry));
    std::sort(pool.begin(), pool.end());
    return pool;
  }

  std::pair<Leaf, Leaf> split_leaf(const Leaf& leaf) {
    const int f = leaf.split.feature;
    const double thr = leaf.split.threshold;
    const double* col = X_.col(f).data();
    auto mid = std::stable_partition(rows_.begin() + static_cast<std::ptrdiff_t>(leaf.begin),
                                     rows_.begin() + static_cast<std::ptrdiff_t>(leaf.end),
                                     [col, thr](int i) { return col[i] <= thr; });
    const auto split_at = static_cast<std::size_t>(mid - rows_.begin());
    const int left = static_cast<int>(tree_.nodes.size());
    tree_.nodes.push_back(TreeNode{});
    tree_.nodes.push_back(TreeNode{});
    auto& tn = tree_.nodes[static_cast<std::size_t>(leaf.node)];
    tn.feature = f;
    tn.threshold = thr;
    tn.left = left;
    tn.right = left + 1;
    Leaf l = make_leaf(left, leaf.begin, split_at, leaf.depth + 1);
    Leaf r = make_leaf(left + 1, split_at, leaf.end, leaf.depth + 1);
    return {l, r};
  }

  const Eigen::MatrixXd& X_;
  const std::vector<double>& g_;
  GrowConfig cfg_;
  std::vector<int> features_;
  Rng* rng_;
  std::vector<int> rows_;
  std::vector<int> scratch_;
  RegressionTree tree_;
};

void check_trainable(const FeatureMatrix& fm) {
  if (fm.X.rows() == 0 || fm.X.cols() == 0) throw std::invalid_argument("train: empty feature matrix");
  if (fm.y.size() != fm.X.rows()) throw std::invalid_argument("train: target length does not match rows");
  if (!fm.X.allFinite() || !fm.y.allFinite()) throw std::invalid_argument("train: non-finite features or target");
}

std::vector<int> all_features(Eigen::Index d) {
  std::vector<int> f(static_cast<std::size_t>(d));
  std::iota(f.begin(), f.end(), 0);
  return f;
}

}  // namespace

double RegressionTree::predict(const double* row, Eigen::Index stride) const {
  int k = 0;
  while (true) {
    const auto& n = nodes[static_cast<std::size_t>(k)];
    if (n.feature < 0) return n.value;
    k = row[static_cast<Eigen::Index>(n.feature) * stride] <= n.threshold ? n.left : n.right;
  }
}

int RegressionTree::leaf_count() const {
  return static_cast<int>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.feature < 0; }));
}

int RegressionTree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    if (nodes[k].feature >= 0) {
      d[static_cast<std::size_t>(nodes[k].left)] = d[k] + 1;
      d[static_cast<std::size_t>(nodes[k].right)] = d[k] + 1;
      best = std::max(best, d[k] + 1);
    }
  }
  return best;
}

std::vector<int> RegressionTree::used_features() const {
  std::vector<int> out;
  for (const auto& n : nodes) {
    if (n.feature >= 0) out.push_back(n.feature);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::string to_string(EnsembleFamily family) {
  switch (family) {
    case EnsembleFamily::kRandomForest: return "rf";
    case EnsembleFamily::kGbmDepthwise: return "gbm-depth";
    case EnsembleFamily::kGbmLeafwise: return "gbm-leaf";
  }
  return "unknown";
}

EnsembleFamily parse_ensemble_family(const std::string& name) {
  if (name == "rf") return EnsembleFamily::kRandomForest;
  if (name == "gbm-depth" || name == "xgb") return EnsembleFamily::kGbmDepthwise;
  if (name == "gbm-leaf" || name == "lgbm") return EnsembleFamily::kGbmLeafwise;
  throw std::invalid_argument("unknown ensemble family '" + name + "' (expected rf|gbm-depth|gbm-leaf)");
}

GbmParams GbmParams::depthwise_defaults() { return GbmParams{}; }

GbmParams GbmParams::leafwise_defaults() {
  GbmParams p;
  p.growth = GrowthPolicy::kLeafwise;
  p.nrounds = 100;
  p.learning_rate = 0.1;
  p.max_depth = 0;
  p.num_leaves = 31;
  p.min_child_weight = 0.001;
  p.min_data_in_leaf = 20;
  p.lambda_l2 = 0.0;
  p.lambda_l1 = 0.0;
  return p;
}

EnsembleParams EnsembleParams::defaults(EnsembleFamily family) {
  EnsembleParams p;
  p.family = family;
  if (family == EnsembleFamily::kGbmLeafwise) p.gbm = GbmParams::leafwise_defaults();
  return p;
}

std::string EnsembleParams::describe() const {
  std::ostringstream out;
  if (family == EnsembleFamily::kRandomForest) {
    out << "rf(ntree=" << rf.ntree << ",mtry=" << rf.mtry << ",nodesize=" << rf.nodesize << ")";
  } else {
    out << to_string(family) << "(nrounds=" << gbm.nrounds << ",eta=" << gbm.learning_rate
        << ",max_depth=" << gbm.max_depth << ",num_leaves=" << gbm.num_leaves << ",subsample=" << gbm.subsample
        << ",colsample=" << gbm.colsample << ",min_child_weight=" << gbm.min_child_weight
        << ",l2=" << gbm.lambda_l2 << ",l1=" << gbm.lambda_l1 << ",gamma=" << gbm.min_split_gain << ")";
  }
  return out.str();
}

bool EnsembleParams::operator==(const EnsembleParams& o) const { return describe() == o.describe() && family == o.family; }

TreeEnsemble train_random_forest(const FeatureMatrix& fm, const RandomForestParams& params, std::uint64_t seed,
                                 int threads) {
  check_trainable(fm);
  if (params.ntree < 1) throw std::invalid_argument("random forest: ntree must be positive");
  const auto n = static_cast<int>(fm.X.rows());
  const auto d = static_cast<int>(fm.X.cols());
  TreeEnsemble ens;
  ens.params.family = EnsembleFamily::kRandomForest;
  ens.params.rf = params;
  ens.params.rf.mtry = params.mtry > 0 ? std::min(params.mtry, d) : std::max(1, d / 3);
  ens.seed = seed;
  ens.feature_names = fm.layout.names;
  ens.trees.resize(static_cast<std::size_t>(params.ntree));

  std::vector<double> y(fm.y.data(), fm.y.data() + fm.y.size());
  GrowConfig cfg;
  cfg.terminal_size = params.nodesize;
  cfg.split.noise_floor = 1e-20 * (1.0 + fm.y.squaredNorm());
  cfg.mtry = ens.params.rf.mtry;
  const auto features = all_features(d);
  parallel_for(ens.trees.size(), threads, [&](std::size_t t) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(t)}));
    std::vector<int> rows(static_cast<std::size_t>(n));
    if (params.bootstrap) {
      std::uniform_int_distribution<int> draw(0, n - 1);
      for (auto& r : rows) r = draw(rng);
    } else {
      std::iota(rows.begin(), rows.end(), 0);
    }
    TreeGrower grower(fm.X, y, cfg, features, &rng);
    ens.trees[t] = grower.grow(std::move(rows));
  });
  return ens;
}

TreeEnsemble train_gbm(const FeatureMatrix& fm, const GbmParams& params, std::uint64_t seed) {
  check_trainable(fm);
  if (params.nrounds < 0) throw std::invalid_argument("gbm: nrounds must be non-negative");
  if (!(params.subsample > 0.0 && params.subsample <= 1.0) || !(params.colsample > 0.0 && params.colsample <= 1.0)) {
    throw std::invalid_argument("gbm: subsample and colsample must lie in (0, 1]");
  }
  const auto n = static_cast<int>(fm.X.rows());
  const auto d = static_cast<int>(fm.X.cols());
  TreeEnsemble ens;
  ens.params.family = params.growth == GrowthPolicy::kLeafwise ? EnsembleFamily::kGbmLeafwise
                                                               : EnsembleFamily::kGbmDepthwise;
  ens.params.gbm = params;
  ens.seed = seed;
  ens.feature_names = fm.layout.names;
  ens.base_score = fm.y.mean();

  GrowConfig cfg;
  cfg.split.lambda_l2 = params.lambda_l2;
  cfg.split.lambda_l1 = params.lambda_l1;
  cfg.split.min_child_weight = params.min_child_weight;
  cfg.split.min_data = std::max(1, params.min_data_in_leaf);
  cfg.split.min_gain = params.min_split_gain;
  cfg.split.gain_factor = 0.5;
  cfg.split.noise_floor = 1e-20 * (1.0 + fm.y.squaredNorm());
  cfg.max_depth = params.max_depth;
  cfg.leafwise = params.growth == GrowthPolicy::kLeafwise;
  cfg.max_leaves = cfg.leafwise ? params.num_leaves : 0;
  cfg.leaf_scale = params.learning_rate;

  Eigen::VectorXd pred = Eigen::VectorXd::Constant(n, ens.base_score);
  std::vector<double> residual(static_cast<std::size_t>(n));
  const int n_rows = std::max(1, static_cast<int>(std::ceil(params.subsample * n)));
  const int n_cols = std::max(1, static_cast<int>(std::ceil(params.colsample * d)));
  for (int round = 0; round < params.nrounds; ++round) {
    for (int i = 0; i < n; ++i) residual[static_cast<std::size_t>(i)] = fm.y(i) - pred(i);
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(round)}));
    std::vector<int> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), 0);
    if (n_rows < n) {
      std::shuffle(rows.begin(), rows.end(), rng);
      rows.resize(static_cast<std::size_t>(n_rows));
      std::sort(rows.begin(), rows.end());
    }
    auto features = all_features(d);
    if (n_cols < d) {
      std::shuffle(features.begin(), features.end(), rng);
      features.resize(static_cast<std::size_t>(n_cols));
      std::sort(features.begin(), features.end());
    }
    TreeGrower grower(fm.X, residual, cfg, features, &rng);
    RegressionTree tree = grower.grow(std::move(rows));
    for (int i = 0; i < n; ++i) pred(i) += tree.predict(fm.X.data() + i, fm.X.rows());
    ens.trees.push_back(std::move(tree));
  }
  return ens;
}

TreeEnsemble train_ensemble(const FeatureMatrix& fm, const EnsembleParams& params, std::uint64_t seed, int threads) {
  if (params.family == EnsembleFamily::kRandomForest) return train_random_forest(fm, params.rf, seed, threads);
  GbmParams g = params.gbm;
  g.growth = params.family == EnsembleFamily::kGbmLeafwise ? GrowthPolicy::kLeafwise : GrowthPolicy::kDepthwise;
  return train_gbm(fm, g, seed);
}

double TreeEnsemble::predict(const double* row, Eigen::Index stride) const {
  if (params.family == EnsembleFamily::kRandomForest) {
    if (trees.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& t : trees) acc += t.predict(row, stride);
    return acc / static_cast<double>(trees.size());
  }
  double acc = base_score;
  for (const auto& t : trees) acc += t.predict(row, stride);
  return acc;
}

Eigen::VectorXd TreeEnsemble::predict(const Eigen::MatrixXd& X) const {
  if (!feature_names.empty() && static_cast<std::size_t>(X.cols()) != feature_names.size()) {
    throw std::invalid_argument("predict: model expects " + std::to_string(feature_names.size()) + " features, got " +
                                std::to_string(X.cols()));
  }
  Eigen::VectorXd out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) out(i) = predict(X.data() + i, X.rows());
  return out;
}

namespace {

constexpr const char* kFormat = "ctrecon-ensemble/1";

nlohmann::json params_json(const EnsembleParams& p) {
  nlohmann::json j;
  j["family"] = to_string(p.family);
  if (p.family == EnsembleFamily::kRandomForest) {
    j["ntree"] = p.rf.ntree;
    j["mtry"] = p.rf.mtry;
    j["nodesize"] = p.rf.nodesize;
    j["bootstrap"] = p.rf.bootstrap;
  } else {
    const auto& g = p.gbm;
    j["nrounds"] = g.nrounds;
    j["learning_rate"] = g.learning_rate;
    j["max_depth"] = g.max_depth;
    j["num_leaves"] = g.num_leaves;
    j["subsample"] = g.subsample;
    j["colsample"] = g.colsample;
    j["min_child_weight"] = g.min_child_weight;
    j["min_data_in_leaf"] = g.min_data_in_leaf;
    j["lambda_l2"] = g.lambda_l2;
    j["lambda_l1"] = g.lambda_l1;
    j["min_split_gain"] = g.min_split_gain;
  }
  return j;
}

EnsembleParams params_from_json(const nlohmann::json& j) {
  EnsembleParams p = EnsembleParams::defaults(parse_ensemble_family(j.at("family").get<std::string>()));
  if (p.family == EnsembleFamily::kRandomForest) {
    p.rf.ntree = j.at("ntree").get<int>();
    p.rf.mtry = j.at("mtry").get<int>();
    p.rf.nodesize = j.at("nodesize").get<int>();
    p.rf.bootstrap = j.at("bootstrap").get<bool>();
  } else {
    auto& g = p.gbm;
    g.growth = p.family == EnsembleFamily::kGbmLeafwise ? GrowthPolicy::kLeafwise : GrowthPolicy::kDepthwise;
    g.nrounds = j.at("nrounds").get<int>();
    g.learning_rate = j.at("learning_rate").get<double>();
    g.max_depth = j.at("max_depth").get<int>();
    g.num_leaves = j.at("num_leaves").get<int>();
    g.subsample = j.at("subsample").get<double>();
    g.colsample = j.at("colsample").get<double>();
    g.min_child_weight = j.at("min_child_weight").get<double>();
    g.min_data_in_leaf = j.at("min_data_in_leaf").get<int>();
    g.lambda_l2 = j.at("lambda_l2").get<double>();
    g.lambda_l1 = j.at("lambda_l1").get<double>();
    g.min_split_gain = j.at("min_split_gain").get<double>();
  }
  return p;
}

}  // namespace

std::string TreeEnsemble::to_json() const {
  nlohmann::json j;
  j["format"] = kFormat;
  j["manifest"] = {{"params", params_json(params)},
                   {"seed", hex64(seed)},
                   {"feature_names", feature_names},
                   {"trees", trees.size()}};
  j["base_score"] = base_score;
  auto& arr = j["trees"] = nlohmann::json::array();
  for (const auto& t : trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes) {
      if (n.feature < 0) {
        nodes.push_back({{"v", n.value}});
      } else {
        nodes.push_back({{"f", n.feature}, {"t", n.threshold}, {"l", n.left}, {"r", n.right}});
      }
    }
    arr.push_back(std::move(nodes));
  }
  return j.dump();
}

TreeEnsemble TreeEnsemble::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.value("format", "") != kFormat) throw std::invalid_argument("ensemble: unsupported format");
  TreeEnsemble ens;
  const auto& m = j.at("manifest");
  ens.params = params_from_json(m.at("params"));
  ens.seed = std::stoull(m.at("seed").get<std::string>(), nullptr, 16);
  ens.feature_names = m.at("feature_names").get<std::vector<std::string>>();
  ens.base_score = j.at("base_score").get<double>();
  const auto d = static_cast<int>(ens.feature_names.size());
  for (const auto& jt : j.at("trees")) {
    RegressionTree t;
    for (const auto& jn : jt) {
      TreeNode n;
      if (jn.contains("f")) {
        n.feature = jn.at("f").get<int>();
        n.threshold = jn.at("t").get<double>();
        n.left = jn.at("l").get<int>();
        n.right = jn.at("r").get<int>();
      } else {
        n.value = jn.at("v").get<double>();
      }
      t.nodes.push_back(n);
    }
    const auto size = static_cast<int>(t.nodes.size());
    for (const auto& n : t.nodes) {
      if (n.feature >= 0 && (n.feature >= d || n.left <= 0 || n.right <= 0 || n.left >= size || n.right >= size ||
                             !std::isfinite(n.threshold))) {
        throw std::invalid_argument("ensemble: malformed tree node");
      }
    }
    if (t.nodes.empty()) throw std::invalid_argument("ensemble: empty tree");
    ens.trees.push_back(std::move(t));
  }
  return ens;
}

void TreeEnsemble::save(const std::filesystem::path& path) const { csv::write_file(path, to_json()); }

TreeEnsemble TreeEnsemble::load(const std::filesystem::path& path) { return from_json(csv::read_file(path)); }

}  // namespace ctrecon
