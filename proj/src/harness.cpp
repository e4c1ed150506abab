#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "ctrecon/csv.hpp"
#include "ctrecon/harness.hpp"
#include "ctrecon/util.hpp"

#ifndef CTRECON_VERSION
#define CTRECON_VERSION "0.0.0"
#endif

namespace ctrecon {

using json = nlohmann::json;

int WindowPlan::outer_count(int panel_days) const {
  if (Q < 7 || H < 1 || R < 1 || step < 1) throw std::invalid_argument("window plan: " + describe() + " is invalid");
  const int need = N() + H;
  if (panel_days < need) {
    throw std::invalid_argument("window plan " + describe() + " needs at least " + std::to_string(need) +
                                " days; the panel has " + std::to_string(panel_days) + " (short by " +
                                std::to_string(need - panel_days) + ")");
  }
  return (panel_days - need) / step + 1;
}

std::string WindowPlan::describe() const {
  return "Q=" + std::to_string(Q) + ",H=" + std::to_string(H) + ",R=" + std::to_string(R) + ",step=" +
         std::to_string(step);
}

std::vector<OuterIteration> plan_windows(int panel_days, const WindowPlan& plan) {
  const int count = plan.outer_count(panel_days);
  std::vector<OuterIteration> out;
  for (int i = 0; i < count; ++i) {
    OuterIteration o;
    o.index = i;
    const int s = i * plan.step;
    for (int r = 0; r < plan.R; ++r) o.validation.push_back({s + r * plan.H, plan.Q, plan.H});
    o.final_fit = {s, plan.N(), plan.H};
    out.push_back(std::move(o));
  }
  return out;
}

namespace {

json ctf_json(const CrossTemporalForecast& f) {
  return {{"nodes", f.nodes}, {"orders", f.orders}, {"m", f.m}, {"periods", f.periods}, {"values", f.values}};
}

// NaN is not representable in JSON; residual gaps travel as null.
json values_json(const std::vector<std::vector<double>>& values) {
  json out = json::array();
  for (const auto& v : values) {
    json row = json::array();
    for (double x : v) row.push_back(std::isfinite(x) ? json(x) : json(nullptr));
    out.push_back(std::move(row));
  }
  return out;
}

CrossTemporalForecast ctf_from_json(const json& j) {
  CrossTemporalForecast f;
  f.nodes = j.at("nodes").get<std::vector<std::string>>();
  f.orders = j.at("orders").get<std::vector<int>>();
  f.m = j.at("m").get<int>();
  f.periods = j.at("periods").get<int>();
  for (const auto& row : j.at("values")) {
    std::vector<double> v;
    for (const auto& x : row) v.push_back(x.is_null() ? std::nan("") : x.get<double>());
    f.values.push_back(std::move(v));
  }
  f.check_complete();
  return f;
}

}  // namespace

std::string base_set_to_json(const BaseForecastSet& set) {
  json j;
  j["forecasts"] = ctf_json(set.forecasts);
  j["forecasts"]["values"] = values_json(set.forecasts.values);
  j["residuals"] = ctf_json(set.residuals);
  j["residuals"]["values"] = values_json(set.residuals.values);
  j["method"] = set.method;
  j["window_id"] = set.window_id;
  j["fallback"] = set.fallback;
  return j.dump();
}

BaseForecastSet base_set_from_json(const std::string& text) {
  const auto j = json::parse(text);
  BaseForecastSet set;
  set.forecasts = ctf_from_json(j.at("forecasts"));
  set.residuals = ctf_from_json(j.at("residuals"));
  set.method = j.at("method").get<std::string>();
  set.window_id = j.at("window_id").get<std::string>();
  set.fallback = j.at("fallback").get<std::vector<bool>>();
  return set;
}

BaseForecastCache::BaseForecastCache(bool enabled, std::optional<std::filesystem::path> directory)
    : enabled_(enabled), directory_(std::move(directory)) {
  if (enabled_ && directory_) std::filesystem::create_directories(*directory_);
}

std::string BaseForecastCache::key(std::uint64_t panel_hash, const Hierarchy& hierarchy, const TemporalScheme& scheme,
                                   const std::string& method, const ForecastWindow& window) {
  std::uint64_t h = fnv1a(hex64(panel_hash));
  h = fnv1a(hierarchy.spec().to_csv(), h);
  h = fnv1a(scheme.describe(), h);
  h = fnv1a(method, h);
  h = fnv1a(window.id(), h);
  return method + "-" + window.id() + "-" + hex64(h);
}

std::filesystem::path BaseForecastCache::path_for(const std::string& key) const { return *directory_ / (key + ".json"); }

std::optional<BaseForecastSet> BaseForecastCache::get(const std::string& key) {
  if (!enabled_) return std::nullopt;
  std::string text;
  {
    std::lock_guard lock(mutex_);
    if (auto it = memory_.find(key); it != memory_.end()) text = it->second;
  }
  if (text.empty() && directory_ && std::filesystem::exists(path_for(key))) {
    try {
      const auto raw = csv::read_file(path_for(key));
      const auto nl = raw.find('\n');
      if (nl == std::string::npos || raw.substr(0, nl) != hex64(fnv1a(raw.substr(nl + 1)))) {
        throw std::runtime_error("checksum mismatch");
      }
      text = raw.substr(nl + 1);
      base_set_from_json(text);
    } catch (const std::exception&) {
      std::error_code ec;
      std::filesystem::remove(path_for(key), ec);
      ++evictions_;
      text.clear();
    }
  }
  if (text.empty()) return std::nullopt;
  return base_set_from_json(text);
}

void BaseForecastCache::put(const std::string& key, const BaseForecastSet& set) {
  if (!enabled_) return;
  auto text = base_set_to_json(set);
  if (directory_) {
    // write-then-rename keeps concurrent readers away from partial files
    const auto tmp = path_for(key).string() + ".tmp" + hex64(fnv1a(text));
    csv::write_file(tmp, hex64(fnv1a(text)) + "\n" + text);
    std::filesystem::rename(tmp, path_for(key));
  }
  std::lock_guard lock(mutex_);
  memory_[key] = std::move(text);
}

BaseForecastSet BaseForecastCache::get_or_compute(const std::string& key,
                                                  const std::function<BaseForecastSet()>& compute) {
  if (auto hit = get(key)) {
    ++hits_;
    return *hit;
  }
  ++misses_;
  auto set = compute();
  if (!enabled_) return set;
  put(key, set);
  // hand back the stored form so hits and misses yield identical sets
  return *get(key);
}

bool is_ml_method(const std::string& recon) {
  static const std::set<std::string> names{"rf", "xgb", "lgbm", "gbm-depth", "gbm-leaf"};
  return names.count(recon) > 0;
}

EnsembleFamily ml_family(const std::string& recon) { return parse_ensemble_family(recon); }

namespace {

json params_to_json(const EnsembleParams& p) {
  if (p.family == EnsembleFamily::kRandomForest) {
    return {{"ntree", p.rf.ntree}, {"mtry", p.rf.mtry}, {"nodesize", p.rf.nodesize}};
  }
  const auto& g = p.gbm;
  return {{"nrounds", g.nrounds},     {"learning_rate", g.learning_rate},
          {"max_depth", g.max_depth}, {"num_leaves", g.num_leaves},
          {"subsample", g.subsample}, {"colsample", g.colsample},
          {"min_child_weight", g.min_child_weight}, {"min_data_in_leaf", g.min_data_in_leaf},
          {"lambda_l2", g.lambda_l2}, {"lambda_l1", g.lambda_l1},
          {"min_split_gain", g.min_split_gain}};
}

EnsembleParams params_with_overrides(EnsembleParams p, const json& j) {
  static const std::set<std::string> rf_keys{"ntree", "mtry", "nodesize"};
  static const std::set<std::string> gbm_keys{"nrounds",   "learning_rate",    "max_depth",        "num_leaves",
                                              "subsample", "colsample",        "min_child_weight", "min_data_in_leaf",
                                              "lambda_l2", "lambda_l1",        "min_split_gain"};
  const auto& keys = p.family == EnsembleFamily::kRandomForest ? rf_keys : gbm_keys;
  for (const auto& [k, v] : j.items()) {
    if (!keys.count(k)) throw std::invalid_argument("config: unknown " + to_string(p.family) + " parameter '" + k + "'");
  }
  p.rf.ntree = j.value("ntree", p.rf.ntree);
  p.rf.mtry = j.value("mtry", p.rf.mtry);
  p.rf.nodesize = j.value("nodesize", p.rf.nodesize);
  auto& g = p.gbm;
  g.nrounds = j.value("nrounds", g.nrounds);
  g.learning_rate = j.value("learning_rate", g.learning_rate);
  g.max_depth = j.value("max_depth", g.max_depth);
  g.num_leaves = j.value("num_leaves", g.num_leaves);
  g.subsample = j.value("subsample", g.subsample);
  g.colsample = j.value("colsample", g.colsample);
  g.min_child_weight = j.value("min_child_weight", g.min_child_weight);
  g.min_data_in_leaf = j.value("min_data_in_leaf", g.min_data_in_leaf);
  g.lambda_l2 = j.value("lambda_l2", g.lambda_l2);
  g.lambda_l1 = j.value("lambda_l1", g.lambda_l1);
  g.min_split_gain = j.value("min_split_gain", g.min_split_gain);
  return p;
}

json config_json(const ExperimentConfig& c) {
  json j;
  j["panel"] = c.panel.string();
  j["hierarchy"] = c.hierarchy.string();
  j["m"] = c.m;
  j["orders"] = c.orders;
  j["base"] = c.base;
  j["recon"] = c.recon;
  j["windows"] = {{"Q", c.plan.Q}, {"H", c.plan.H}, {"R", c.plan.R}, {"step", c.plan.step}};
  if (c.max_outer) j["max_outer"] = *c.max_outer;
  j["features"] = to_string(c.features);
  j["tune"] = {{"mode", to_string(c.tune.mode)}, {"budget", c.tune.budget}};
  json ml = json::object();
  for (const auto& r : c.recon) {
    if (is_ml_method(r)) ml[r] = params_to_json(c.params_for(r));
  }
  j["ml"] = ml;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["output"] = c.output.string();
  if (c.periods) j["periods"] = {c.periods->first, c.periods->second};
  j["cache"] = c.cache;
  if (c.cache_dir) j["cache_dir"] = c.cache_dir->string();
  j["importance"] = c.importance;
  j["importance_repeats"] = c.importance_repeats;
  return j;
}

}  // namespace

EnsembleParams ExperimentConfig::params_for(const std::string& recon) const {
  if (auto it = ml_params.find(recon); it != ml_params.end()) return it->second;
  return EnsembleParams::defaults(ml_family(recon));
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text, const std::filesystem::path& base_dir) {
  const auto j = json::parse(text);
  static const std::set<std::string> known{"panel",    "hierarchy", "m",         "orders", "base",
                                           "recon",    "windows",   "max_outer", "features", "tune",
                                           "ml",       "seed",      "threads",   "output", "periods",
                                           "cache",    "cache_dir", "importance", "importance_repeats"};
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw std::invalid_argument("config: unknown key '" + k + "'");
  }
  auto resolve = [&base_dir](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  ExperimentConfig c;
  if (j.contains("panel")) c.panel = resolve(j["panel"].get<std::string>());
  if (j.contains("hierarchy")) c.hierarchy = resolve(j["hierarchy"].get<std::string>());
  c.m = j.value("m", c.m);
  c.orders = j.value("orders", c.orders);
  c.base = j.value("base", c.base);
  c.recon = j.value("recon", c.recon);
  if (j.contains("windows")) {
    const auto& w = j["windows"];
    c.plan = {w.value("Q", c.plan.Q), w.value("H", c.plan.H), w.value("R", c.plan.R), w.value("step", c.plan.step)};
  }
  if (j.contains("max_outer")) c.max_outer = j["max_outer"].get<int>();
  if (j.contains("features")) c.features = parse_feature_variant(j["features"].get<std::string>());
  if (j.contains("tune")) {
    const auto& t = j["tune"];
    if (t.contains("mode")) c.tune.mode = parse_tune_mode(t["mode"].get<std::string>());
    c.tune.budget = t.value("budget", c.tune.budget);
  }
  if (j.contains("ml")) {
    for (const auto& [name, overrides] : j["ml"].items()) {
      if (!is_ml_method(name)) throw std::invalid_argument("config: '" + name + "' is not an ensemble method");
      c.ml_params[name] = params_with_overrides(EnsembleParams::defaults(ml_family(name)), overrides);
    }
  }
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  if (j.contains("output")) c.output = resolve(j["output"].get<std::string>());
  if (j.contains("periods")) {
    const auto& p = j["periods"];
    if (!p.is_array() || p.size() != 2) throw std::invalid_argument("config: periods must be [d1, d2]");
    c.periods = std::pair{p[0].get<int>(), p[1].get<int>()};
  }
  c.cache = j.value("cache", c.cache);
  if (j.contains("cache_dir")) c.cache_dir = resolve(j["cache_dir"].get<std::string>());
  c.importance = j.value("importance", c.importance);
  c.importance_repeats = j.value("importance_repeats", c.importance_repeats);
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  return from_json(csv::read_file(path), path.parent_path());
}

std::string ExperimentConfig::to_json() const { return config_json(*this).dump(2); }

std::uint64_t ExperimentConfig::hash() const {
  auto j = config_json(*this);
  j.erase("threads");
  j.erase("output");
  j.erase("cache");
  j.erase("cache_dir");
  return fnv1a(j.dump());
}

void ExperimentConfig::validate() const {
  (void)scheme();
  if (base.empty()) throw std::invalid_argument("config: no base method");
  for (const auto& b : base) parse_base_method(b);
  for (const auto& r : recon) {
    if (!is_ml_method(r) && !parse_linear_method(r)) {
      throw std::invalid_argument("config: unknown reconciliation method '" + r + "'");
    }
  }
  if (plan.Q < 7 || plan.H < 1 || plan.R < 1 || plan.step < 1) {
    throw std::invalid_argument("config: window plan " + plan.describe() + " is invalid");
  }
  if (max_outer && *max_outer < 1) throw std::invalid_argument("config: max_outer must be positive");
  if (periods && periods->first > periods->second) throw std::invalid_argument("config: periods need d1 <= d2");
  if (importance_repeats < 1) throw std::invalid_argument("config: importance_repeats must be positive");
  if (tune.mode != TuneMode::kOff && tune.budget < 1) throw std::invalid_argument("config: tune budget must be >= 1");
}

std::string period_of(int day, const std::pair<int, int>& periods) {
  if (day < periods.first) return "pre";
  if (day < periods.second) return "during";
  return "post";
}

namespace {

CrossTemporalForecast actual_ctf(const Panel& panel, const Hierarchy& h, const TemporalScheme& scheme, int start,
                                 int days) {
  auto f = CrossTemporalForecast::zeros(h, scheme, days);
  f.values = window_series(panel, h, scheme, start, days);
  f.check_complete();
  return f;
}

CrossTemporalForecast concat(const std::vector<CrossTemporalForecast>& parts, const Hierarchy& h,
                             const TemporalScheme& scheme) {
  int periods = 0;
  for (const auto& p : parts) periods += p.periods;
  auto out = CrossTemporalForecast::zeros(h, scheme, periods);
  for (auto& v : out.values) v.clear();
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < out.values.size(); ++i) {
      out.values[i].insert(out.values[i].end(), p.values[i].begin(), p.values[i].end());
    }
  }
  return out;
}

CrossTemporalForecast select_days(const CrossTemporalForecast& f, const std::vector<int>& days) {
  CrossTemporalForecast out = f;
  out.periods = static_cast<int>(days.size());
  for (std::size_t node = 0; node < f.nodes.size(); ++node) {
    for (std::size_t oi = 0; oi < f.p(); ++oi) {
      const auto per = static_cast<std::size_t>(f.m / f.orders[oi]);
      const auto& src = f.at(node, oi);
      auto& dst = out.at(node, oi);
      dst.clear();
      for (int d : days) {
        const auto from = static_cast<std::size_t>(d) * per;
        dst.insert(dst.end(), src.begin() + static_cast<std::ptrdiff_t>(from),
                   src.begin() + static_cast<std::ptrdiff_t>(from + per));
      }
    }
  }
  return out;
}

std::string method_label(const std::string& base, const std::string& recon) { return base + ":" + recon; }

}  // namespace

ExperimentResult run_experiment(const Panel& panel, const Hierarchy& h, const ExperimentConfig& config,
                                BaseForecastCache* cache) {
  config.validate();
  const auto scheme = config.scheme();
  if (panel.slots_per_day() != scheme.m()) {
    throw std::invalid_argument("experiment: panel has " + std::to_string(panel.slots_per_day()) +
                                " slots per day but the scheme needs m=" + std::to_string(scheme.m()));
  }
  auto outers = plan_windows(panel.days(), config.plan);
  if (config.max_outer && static_cast<int>(outers.size()) > *config.max_outer) {
    outers.resize(static_cast<std::size_t>(*config.max_outer));
  }
  BaseForecastCache local(config.cache, config.cache_dir);
  if (!cache) cache = &local;
  const auto panel_hash = panel.content_hash();
  const int threads = std::max(1, config.threads);
  const std::size_t nb = h.bottom_count();
  const bool any_ml = std::any_of(config.recon.begin(), config.recon.end(), is_ml_method);

  ExperimentResult result;
  std::set<std::string> failed;
  for (const auto& base : config.base) {
    result.methods.push_back(method_label(base, "base"));
    for (const auto& r : config.recon) result.methods.push_back(method_label(base, r));
  }

  std::vector<CrossTemporalForecast> actual_parts;
  for (const auto& outer : outers) {
    const auto hits_before = cache->hits();
    const int H = config.plan.H;
    actual_parts.push_back(actual_ctf(panel, h, scheme, outer.test_start(), H));
    for (int d = 0; d < H; ++d) result.test_days.push_back(outer.test_start() + d);
    result.window_ids.push_back(outer.final_fit.id());

    for (const auto& base : config.base) {
      const BaseMethod bm = parse_base_method(base);
      auto fetch = [&](const ForecastWindow& w) {
        return cache->get_or_compute(BaseForecastCache::key(panel_hash, h, scheme, base, w), [&] {
          return produce_base_forecasts(panel, h, scheme, bm, w, BaseForecastOptions{threads, true});
        });
      };
      const BaseForecastSet final_set = fetch(outer.final_fit);
      result.fallback_series += final_set.fallback_count();
      result.forecasts[method_label(base, "base")].push_back(final_set.forecasts);

      std::vector<CrossTemporalForecast> val_forecasts;
      std::vector<SeriesMatrix> val_actual;
      if (any_ml) {
        for (const auto& w : outer.validation) {
          val_forecasts.push_back(fetch(w).forecasts);
          val_actual.push_back(actual_ctf(panel, h, scheme, w.start_day + w.estimation_days, H).bottom_order1(h));
        }
      }

      for (const auto& recon : config.recon) {
        const auto label = method_label(base, recon);
        if (failed.count(label)) continue;
        ReconciledForecastSet rs;
        try {
          if (is_ml_method(recon)) {
            const auto family = ml_family(recon);
            const auto params = config.params_for(recon);
            std::vector<TreeEnsemble> models(nb);
            std::vector<std::vector<double>> scores(nb);
            const bool want_importance = config.importance && outer.index == 0;
            parallel_for(nb, threads, [&](std::size_t b) {
              const auto fm = build_features(val_forecasts, val_actual, h, scheme, config.features, b);
              const std::uint64_t node_seed =
                  derive_seed(config.seed, {static_cast<std::uint64_t>(outer.index),
                                            static_cast<std::uint64_t>(family), static_cast<std::uint64_t>(b)});
              auto p = params;
              if (config.tune.mode != TuneMode::kOff) {
                TuneOptions t = config.tune;
                t.seed = node_seed;
                t.threads = 1;
                p = tune(family, fm, t).best;
              }
              models[b] = train_ensemble(fm, p, node_seed, 1);
              if (want_importance) scores[b] = permutation_importance(models[b], fm, config.importance_repeats, node_seed);
            });
            rs = reconcile_ml(models, final_set.forecasts, h, scheme, config.features, recon, base, final_set.window_id);
            if (want_importance) {
              for (std::size_t b = 0; b < nb; ++b) {
                for (std::size_t j = 0; j < scores[b].size(); ++j) {
                  result.importance.push_back({label, h.id(h.aggregate_count() + b), models[b].feature_names[j], scores[b][j]});
                }
              }
            }
          } else {
            rs = reconcile(*parse_linear_method(recon), final_set, h, scheme);
          }
        } catch (const std::exception& e) {
          result.errors.push_back({label, outer.index, e.what()});
          failed.insert(label);
          continue;
        }
        if (!is_exactly_coherent(rs.forecasts, h, scheme)) {
          throw std::logic_error(label + " produced incoherent forecasts in window " + final_set.window_id);
        }
        result.forecasts[label].push_back(std::move(rs.forecasts));
      }
    }
    result.cache_hits_per_outer.push_back(cache->hits() - hits_before);
  }
  std::erase_if(result.methods, [&failed](const std::string& m) { return failed.count(m) > 0; });
  for (const auto& f : failed) result.forecasts.erase(f);
  result.cache_hits = cache->hits();
  result.cache_misses = cache->misses();

  result.actual = concat(actual_parts, h, scheme);
  const auto& first = outers.front().final_fit;
  const auto insample = actual_ctf(panel, h, scheme, first.start_day, first.estimation_days);
  std::vector<std::pair<std::string, std::vector<int>>> splits;
  if (config.periods) {
    for (const char* name : {"pre", "during", "post"}) {
      std::vector<int> idx;
      for (std::size_t i = 0; i < result.test_days.size(); ++i) {
        if (period_of(result.test_days[i], *config.periods) == name) idx.push_back(static_cast<int>(i));
      }
      if (!idx.empty()) splits.emplace_back(name, std::move(idx));
    }
  }
  std::map<std::string, CrossTemporalForecast> split_actual;
  for (const auto& [name, idx] : splits) split_actual[name] = select_days(result.actual, idx);
  for (const auto& label : result.methods) {
    const auto pooled = concat(result.forecasts.at(label), h, scheme);
    result.metrics.append(evaluate_forecasts(label, pooled, result.actual, insample, h, scheme, "all"));
    for (const auto& [name, idx] : splits) {
      result.metrics.append(
          evaluate_forecasts(label, select_days(pooled, idx), split_actual.at(name), insample, h, scheme, name));
    }
  }
  result.levels = level_summary(result.metrics, h, scheme);

  for (const auto& base : config.base) {
    std::vector<std::string> labels;
    for (const auto& m : result.methods) {
      if (m.rfind(base + ":", 0) == 0) labels.push_back(m);
    }
    if (labels.size() < 2 || labels.size() > 20) continue;
    const auto series = static_cast<Eigen::Index>(h.size() * scheme.p());
    Eigen::MatrixXd errors(static_cast<Eigen::Index>(labels.size()), series);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      Eigen::Index s = 0;
      for (std::size_t node = 0; node < h.size(); ++node) {
        for (int k : scheme.orders()) {
          const auto v = result.metrics.value(labels[i], h.id(node), k, true);
          errors(static_cast<Eigen::Index>(i), s++) = v ? *v : std::nan("");
        }
      }
    }
    try {
      result.mcb.emplace_back(base, mcb_test(errors, labels));
    } catch (const std::invalid_argument& e) {
      result.errors.push_back({base + ":mcb", -1, e.what()});
    }
  }
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  const auto spec = HierarchySpec::load_csv(config.hierarchy);
  const auto report = validate_hierarchy(spec);
  if (!report.ok) throw std::invalid_argument("hierarchy: " + report.summary());
  const auto h = Hierarchy::build(spec);
  const auto panel = Panel::load_csv(config.panel);
  return run_experiment(panel, h, config);
}

std::string scatter_csv(const ExperimentResult& result, const Hierarchy& h, const TemporalScheme& scheme) {
  std::ostringstream out;
  out << "method,node,level,order,mean_actual,wape\n";
  for (const auto& label : result.methods) {
    for (std::size_t node = 0; node < h.size(); ++node) {
      for (std::size_t oi = 0; oi < scheme.p(); ++oi) {
        const auto& a = result.actual.at(node, oi);
        double mean = 0.0;
        for (double v : a) mean += v;
        mean /= static_cast<double>(std::max<std::size_t>(1, a.size()));
        const int k = scheme.orders()[oi];
        const auto w = result.metrics.value(label, h.id(node), k, true);
        out << label << ',' << h.id(node) << ',' << h.level(node) << ',' << k << ',' << csv::format_double(mean)
            << ',' << (w ? csv::format_double(*w) : "") << '\n';
      }
    }
  }
  return out.str();
}

void write_outputs(const ExperimentResult& result, const ExperimentConfig& config, const Panel& panel,
                   const Hierarchy& h, const std::filesystem::path& dir) {
  const auto scheme = config.scheme();
  std::filesystem::create_directories(dir / "forecasts");
  std::vector<std::string> files;
  auto emit = [&](const std::string& name, const std::string& text) {
    csv::write_file(dir / name, text);
    files.push_back(name);
  };
  emit("metrics.csv", result.metrics.to_csv());
  emit("levels_wape.csv", level_table_csv(result.levels, scheme, true));
  emit("levels_mase.csv", level_table_csv(result.levels, scheme, false));
  for (const auto& label : result.methods) {
    std::string text;
    const auto& parts = result.forecasts.at(label);
    for (std::size_t o = 0; o < parts.size(); ++o) {
      text += forecasts_to_csv(parts[o], label, result.window_ids[o], std::nullopt, o == 0);
    }
    auto name = label;
    std::replace(name.begin(), name.end(), ':', '_');
    emit("forecasts/" + name + ".csv", text);
  }
  emit("scatter.csv", scatter_csv(result, h, scheme));
  {
    std::ostringstream out;
    out << "method,node,feature,score\n";
    for (const auto& r : result.importance) {
      out << r.method << ',' << r.node << ',' << r.feature << ',' << csv::format_double(r.score) << '\n';
    }
    emit("importance.csv", out.str());
  }
  {
    std::ostringstream out;
    out << "base,method,average_rank,lower,upper,significantly_worse\n";
    for (const auto& [base, mcb] : result.mcb) {
      const auto lines = csv::split_lines(mcb.to_csv());
      for (std::size_t i = 1; i < lines.size(); ++i) out << base << ',' << lines[i] << '\n';
    }
    emit("mcb.csv", out.str());
  }
  {
    std::ostringstream out;
    out << "method,outer,message\n";
    for (const auto& e : result.errors) {
      std::string msg = e.message;
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      std::replace(msg.begin(), msg.end(), '"', '\'');
      out << e.method << ',' << e.outer << ",\"" << msg << "\"\n";
    }
    emit("errors.csv", out.str());
  }
  json manifest;
  manifest["tool"] = "ctrecon";
  manifest["version"] = CTRECON_VERSION;
  manifest["config"] = json::parse(config.to_json());
  manifest["config_hash"] = hex64(config.hash());
  manifest["seed"] = config.seed;
  manifest["panel_hash"] = hex64(panel.content_hash());
  manifest["panel_days"] = panel.days();
  manifest["nodes"] = h.size();
  manifest["bottom_nodes"] = h.bottom_count();
  manifest["scheme"] = scheme.describe();
  manifest["plan"] = config.plan.describe();
  manifest["outer_iterations"] = result.window_ids.size();
  manifest["windows"] = result.window_ids;
  manifest["methods"] = result.methods;
  manifest["cache"] = {{"hits", result.cache_hits}, {"misses", result.cache_misses},
                       {"hits_per_outer", result.cache_hits_per_outer}};
  manifest["fallback_series"] = result.fallback_series;
  manifest["errors"] = result.errors.size();
  manifest["files"] = files;
  csv::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::string ratio_table_csv(const std::string& reference_levels, const std::string& variant_levels) {
  struct Table {
    std::vector<std::string> orders;
    std::vector<std::string> keys;
    std::map<std::string, std::map<std::string, std::string>> values;
  };
  auto parse = [](const std::string& text) {
    Table t;
    const auto lines = csv::split_lines(text);
    if (lines.empty()) throw std::invalid_argument("ratio table: empty level table");
    const auto header = csv::split(lines[0]);
    if (header.size() < 4 || header[0] != "period" || header[1] != "level" || header[2] != "method") {
      throw std::invalid_argument("ratio table: unexpected header '" + lines[0] + "'");
    }
    t.orders.assign(header.begin() + 3, header.end());
    for (std::size_t i = 1; i < lines.size(); ++i) {
      auto f = csv::split(lines[i]);
      f.resize(header.size());
      const auto key = f[0] + "," + f[1] + "," + f[2];
      t.keys.push_back(key);
      for (std::size_t c = 3; c < header.size(); ++c) t.values[key][header[c]] = f[c];
    }
    return t;
  };
  const auto ref = parse(reference_levels);
  const auto var = parse(variant_levels);
  std::vector<std::string> common;
  for (const auto& o : ref.orders) {
    if (std::find(var.orders.begin(), var.orders.end(), o) != var.orders.end()) common.push_back(o);
  }
  std::ostringstream out;
  out << "period,level,method";
  for (const auto& o : common) out << ',' << o;
  out << '\n';
  for (const auto& key : ref.keys) {
    const auto it = var.values.find(key);
    if (it == var.values.end()) continue;
    out << key;
    for (const auto& o : common) {
      const auto& r = ref.values.at(key).at(o);
      const auto& v = it->second.at(o);
      out << ',';
      if (!r.empty() && !v.empty() && std::stod(r) > 0.0) out << csv::format_double(std::stod(v) / std::stod(r));
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace ctrecon
