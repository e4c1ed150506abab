#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "ctrecon/csv.hpp"
#include "ctrecon/evaluate.hpp"

namespace ctrecon {

std::optional<double> wape(std::span<const double> actual, std::span<const double> forecast) {
  if (actual.size() != forecast.size()) throw std::invalid_argument("wape: length mismatch");
  double err = 0.0, total = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    err += std::abs(actual[i] - forecast[i]);
    total += actual[i];
  }
  if (!(total > 0.0) || !std::isfinite(err)) return std::nullopt;
  return err / total;
}

std::optional<double> mase(std::span<const double> test_actual, std::span<const double> test_forecast,
                           std::span<const double> insample_actual, int lag) {
  if (test_actual.size() != test_forecast.size()) throw std::invalid_argument("mase: length mismatch");
  if (lag < 1) throw std::invalid_argument("mase: lag must be positive");
  const auto l = static_cast<std::size_t>(lag);
  if (test_actual.empty() || insample_actual.size() <= l) return std::nullopt;
  double num = 0.0;
  for (std::size_t i = 0; i < test_actual.size(); ++i) num += std::abs(test_actual[i] - test_forecast[i]);
  num /= static_cast<double>(test_actual.size());
  double den = 0.0;
  for (std::size_t j = l; j < insample_actual.size(); ++j) den += std::abs(insample_actual[j] - insample_actual[j - l]);
  den /= static_cast<double>(insample_actual.size() - l);
  if (!(den > 0.0) || !std::isfinite(num)) return std::nullopt;
  return num / den;
}

namespace {

std::string opt_field(const std::optional<double>& v) { return v ? csv::format_double(*v) : std::string(); }

std::optional<double> parse_opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

std::optional<double> mean_of(const std::vector<std::optional<double>>& values) {
  if (values.empty()) return std::nullopt;
  double acc = 0.0;
  for (const auto& v : values) {
    if (!v) return std::nullopt;
    acc += *v;
  }
  return acc / static_cast<double>(values.size());
}

}  // namespace

void AccuracyTable::append(const AccuracyTable& other) { rows.insert(rows.end(), other.rows.begin(), other.rows.end()); }

std::string AccuracyTable::to_csv(bool header) const {
  std::ostringstream out;
  if (header) out << "method,node,level,order,wape,mase,period\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.node << ',' << r.level << ',' << r.order << ',' << opt_field(r.wape) << ','
        << opt_field(r.mase) << ',' << r.period << '\n';
  }
  return out.str();
}

AccuracyTable AccuracyTable::from_csv(const std::string& text) {
  const auto lines = csv::split_lines(text);
  if (lines.empty()) throw std::invalid_argument("accuracy csv: missing header");
  const auto header = csv::split(lines[0]);
  std::array<int, 7> col{};
  const std::array<const char*, 7> names{"method", "node", "level", "order", "wape", "mase", "period"};
  for (std::size_t i = 0; i < names.size(); ++i) {
    col[i] = csv::column(header, names[i]);
    if (col[i] < 0) throw std::invalid_argument(std::string("accuracy csv: missing column ") + names[i]);
  }
  AccuracyTable t;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto f = csv::split(lines[i]);
    f.resize(std::max<std::size_t>(f.size(), header.size()));
    auto at = [&](int k) { return f[static_cast<std::size_t>(col[static_cast<std::size_t>(k)])]; };
    t.rows.push_back({at(0), at(1), at(2), std::stoi(at(3)), parse_opt(at(4)), parse_opt(at(5)), at(6)});
  }
  return t;
}

std::optional<double> AccuracyTable::value(const std::string& method, const std::string& node, int order,
                                           bool use_wape, const std::string& period) const {
  for (const auto& r : rows) {
    if (r.method == method && r.node == node && r.order == order && r.period == period) {
      return use_wape ? r.wape : r.mase;
    }
  }
  return std::nullopt;
}

AccuracyTable evaluate_forecasts(const std::string& method, const CrossTemporalForecast& forecast,
                                 const CrossTemporalForecast& actual, const CrossTemporalForecast& insample,
                                 const Hierarchy& h, const TemporalScheme& scheme, const std::string& period) {
  for (const auto* f : {&forecast, &actual, &insample}) {
    if (f->nodes != h.node_ids() || f->orders != scheme.orders()) {
      throw std::invalid_argument("evaluate: forecasts do not match the hierarchy");
    }
  }
  if (forecast.periods != actual.periods) throw std::invalid_argument("evaluate: forecast and actual spans differ");
  AccuracyTable t;
  for (std::size_t node = 0; node < h.size(); ++node) {
    for (std::size_t oi = 0; oi < scheme.p(); ++oi) {
      const int k = scheme.orders()[oi];
      AccuracyRow r{method, h.id(node), h.level(node), k, std::nullopt, std::nullopt, period};
      r.wape = wape(actual.at(node, oi), forecast.at(node, oi));
      r.mase = mase(actual.at(node, oi), forecast.at(node, oi), insample.at(node, oi), 7 * scheme.steps(k));
      t.rows.push_back(std::move(r));
    }
  }
  return t;
}

std::vector<LevelRow> level_summary(const AccuracyTable& table, const Hierarchy& h, const TemporalScheme& scheme) {
  std::vector<std::pair<std::string, std::string>> groups;  // (method, period) in first-seen order
  std::map<std::tuple<std::string, std::string, std::string, int>, const AccuracyRow*> index;
  for (const auto& r : table.rows) {
    std::pair<std::string, std::string> g{r.method, r.period};
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
    index[{r.method, r.period, r.node, r.order}] = &r;
  }
  std::vector<LevelRow> out;
  for (const auto& [method, period] : groups) {
    for (const auto& level : h.levels_bottom_up()) {
      const auto members = h.members_of_level(level);
      for (int k : scheme.orders()) {
        std::vector<std::optional<double>> w, m;
        for (std::size_t node : members) {
          const auto it = index.find({method, period, h.id(node), k});
          w.push_back(it == index.end() ? std::nullopt : it->second->wape);
          m.push_back(it == index.end() ? std::nullopt : it->second->mase);
        }
        out.push_back({method, level, k, mean_of(w), mean_of(m), period});
      }
    }
  }
  return out;
}

std::string level_table_csv(const std::vector<LevelRow>& rows, const TemporalScheme& scheme, bool use_wape) {
  std::ostringstream out;
  out << "period,level,method";
  for (int k : scheme.orders()) out << ",k=" << k;
  out << '\n';
  std::vector<std::tuple<std::string, std::string, std::string>> keys;
  std::map<std::tuple<std::string, std::string, std::string, int>, std::optional<double>> values;
  for (const auto& r : rows) {
    std::tuple<std::string, std::string, std::string> key{r.period, r.level, r.method};
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
    values[{r.period, r.level, r.method, r.order}] = use_wape ? r.wape : r.mase;
  }
  auto first_seen = [&keys](auto get, const std::string& v) {
    return std::find_if(keys.begin(), keys.end(), [&](const auto& k) { return get(k) == v; }) - keys.begin();
  };
  const auto period_of = [](const auto& k) { return std::get<0>(k); };
  const auto level_of = [](const auto& k) { return std::get<1>(k); };
  auto grouped = keys;
  std::stable_sort(grouped.begin(), grouped.end(), [&](const auto& a, const auto& b) {
    return std::pair(first_seen(period_of, std::get<0>(a)), first_seen(level_of, std::get<1>(a))) <
           std::pair(first_seen(period_of, std::get<0>(b)), first_seen(level_of, std::get<1>(b)));
  });
  keys = std::move(grouped);
  for (const auto& [period, level, method] : keys) {
    out << period << ',' << level << ',' << method;
    for (int k : scheme.orders()) {
      const auto it = values.find({period, level, method, k});
      out << ',' << (it == values.end() ? std::string() : opt_field(it->second));
    }
    out << '\n';
  }
  return out.str();
}

double nemenyi_q(int methods, double alpha) {
  static constexpr std::array<double, 19> q05{1.959964, 2.343701, 2.569032, 2.727774, 2.849705, 2.94832,  3.030878,
                                              3.10173,  3.163684, 3.218654, 3.268004, 3.312739, 3.353618, 3.39123,
                                              3.426041, 3.458425, 3.488685, 3.517073, 3.543799};
  static constexpr std::array<double, 19> q10{1.644854, 2.052293, 2.291341, 2.459516, 2.588521, 2.692732, 2.779884,
                                              2.854606, 2.919889, 2.977768, 3.029694, 3.076733, 3.119693, 3.159199,
                                              3.195743, 3.229723, 3.261461, 3.291224, 3.319233};
  if (methods < 2 || methods > 20) throw std::invalid_argument("nemenyi_q: tabulated for 2 to 20 methods");
  const auto i = static_cast<std::size_t>(methods - 2);
  if (std::abs(alpha - 0.05) < 1e-12) return q05[i];
  if (std::abs(alpha - 0.10) < 1e-12) return q10[i];
  throw std::invalid_argument("nemenyi_q: alpha must be 0.05 or 0.10");
}

McbResult mcb_test(const Eigen::MatrixXd& errors, const std::vector<std::string>& methods, double alpha) {
  const auto M = errors.rows();
  if (M < 2) throw std::invalid_argument("mcb_test: at least two methods are required");
  if (methods.size() != static_cast<std::size_t>(M)) throw std::invalid_argument("mcb_test: one name per method");
  McbResult r;
  r.methods = methods;
  r.alpha = alpha;
  r.average_ranks.assign(static_cast<std::size_t>(M), 0.0);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(M));
  for (Eigen::Index s = 0; s < errors.cols(); ++s) {
    if (!errors.col(s).allFinite()) continue;
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return errors(a, s) < errors(b, s); });
    for (std::size_t i = 0; i < order.size();) {
      std::size_t j = i;
      while (j + 1 < order.size() && errors(order[j + 1], s) == errors(order[i], s)) ++j;
      const double mid = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
      for (std::size_t t = i; t <= j; ++t) r.average_ranks[static_cast<std::size_t>(order[t])] += mid;
      i = j + 1;
    }
    ++r.series_used;
  }
  if (r.series_used == 0) throw std::invalid_argument("mcb_test: no series with complete errors");
  for (auto& v : r.average_ranks) v /= static_cast<double>(r.series_used);
  r.best = static_cast<std::size_t>(std::min_element(r.average_ranks.begin(), r.average_ranks.end()) -
                                    r.average_ranks.begin());
  r.significantly_worse.assign(static_cast<std::size_t>(M), false);
  if (r.series_used >= 2) {
    const double m = static_cast<double>(M);
    r.critical_distance = nemenyi_q(static_cast<int>(M), alpha) *
                          std::sqrt(m * (m + 1.0) / (12.0 * static_cast<double>(r.series_used)));
    for (std::size_t i = 0; i < r.average_ranks.size(); ++i) {
      r.significantly_worse[i] = r.average_ranks[i] - r.average_ranks[r.best] > *r.critical_distance;
    }
  }
  return r;
}

std::string McbResult::to_csv() const {
  std::ostringstream out;
  out << "method,average_rank,lower,upper,significantly_worse\n";
  const double half = critical_distance ? *critical_distance / 2.0 : 0.0;
  for (std::size_t i = 0; i < methods.size(); ++i) {
    out << methods[i] << ',' << csv::format_double(average_ranks[i]) << ','
        << (critical_distance ? csv::format_double(average_ranks[i] - half) : "") << ','
        << (critical_distance ? csv::format_double(average_ranks[i] + half) : "") << ','
        << (significantly_worse[i] ? 1 : 0) << '\n';
  }
  return out.str();
}

}  // namespace ctrecon
