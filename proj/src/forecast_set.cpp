#include "ctrecon/forecast_set.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "ctrecon/csv.hpp"

namespace ctrecon {

CrossTemporalForecast CrossTemporalForecast::zeros(const Hierarchy& hierarchy, const TemporalScheme& scheme,
                                                   int periods) {
  CrossTemporalForecast f;
  f.nodes = hierarchy.node_ids();
  f.orders = scheme.orders();
  f.m = scheme.m();
  f.periods = periods;
  f.values.resize(f.nodes.size() * f.p());
  for (std::size_t i = 0; i < f.nodes.size(); ++i) {
    for (std::size_t o = 0; o < f.p(); ++o) f.at(i, o).assign(f.length(o), 0.0);
  }
  return f;
}

void CrossTemporalForecast::check_complete() const {
  if (values.size() != nodes.size() * p()) throw std::invalid_argument("forecast set: missing (node, order) entries");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t o = 0; o < p(); ++o) {
      if (at(i, o).size() != length(o)) {
        throw std::invalid_argument("forecast set: node " + nodes[i] + " order " + std::to_string(orders[o]) +
                                    " has length " + std::to_string(at(i, o).size()) + ", expected " +
                                    std::to_string(length(o)));
      }
    }
  }
}

Eigen::MatrixXd CrossTemporalForecast::stacked() const {
  int per_period = 0;
  for (int k : orders) per_period += m / k;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(nodes.size()) * per_period, periods);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    Eigen::Index row = static_cast<Eigen::Index>(i) * per_period;
    for (std::size_t o = p(); o-- > 0;) {
      const int mk = m / orders[o];
      const auto& v = at(i, o);
      for (int tau = 0; tau < periods; ++tau) {
        for (int j = 0; j < mk; ++j) out(row + j, tau) = v[static_cast<std::size_t>(tau * mk + j)];
      }
      row += mk;
    }
  }
  return out;
}

void CrossTemporalForecast::set_from_stacked(const Eigen::MatrixXd& s) {
  int per_period = 0;
  for (int k : orders) per_period += m / k;
  if (s.rows() != static_cast<Eigen::Index>(nodes.size()) * per_period || s.cols() != periods) {
    throw std::invalid_argument("set_from_stacked: shape mismatch");
  }
  values.resize(nodes.size() * p());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    Eigen::Index row = static_cast<Eigen::Index>(i) * per_period;
    for (std::size_t o = p(); o-- > 0;) {
      const int mk = m / orders[o];
      auto& v = at(i, o);
      v.assign(length(o), 0.0);
      for (int tau = 0; tau < periods; ++tau) {
        for (int j = 0; j < mk; ++j) v[static_cast<std::size_t>(tau * mk + j)] = s(row + j, tau);
      }
      row += mk;
    }
  }
}

SeriesMatrix CrossTemporalForecast::bottom_order1(const Hierarchy& hierarchy) const {
  const auto o1 = static_cast<std::size_t>(std::find(orders.begin(), orders.end(), 1) - orders.begin());
  if (o1 >= orders.size()) throw std::invalid_argument("forecast set has no order 1");
  const auto len = static_cast<Eigen::Index>(length(o1));
  SeriesMatrix out(static_cast<Eigen::Index>(hierarchy.bottom_count()), len);
  for (std::size_t b = 0; b < hierarchy.bottom_count(); ++b) {
    const auto& v = at(hierarchy.aggregate_count() + b, o1);
    for (Eigen::Index t = 0; t < len; ++t) out(static_cast<Eigen::Index>(b), t) = v[static_cast<std::size_t>(t)];
  }
  return out;
}

CrossTemporalForecast rebuild_from_bottom(const SeriesMatrix& bottom_order1, const Hierarchy& hierarchy,
                                          const TemporalScheme& scheme) {
  if (bottom_order1.cols() % scheme.m() != 0) throw std::invalid_argument("rebuild_from_bottom: partial period");
  const int periods = static_cast<int>(bottom_order1.cols() / scheme.m());
  const SeriesMatrix full = cross_sectional_aggregate(bottom_order1, hierarchy);
  auto f = CrossTemporalForecast::zeros(hierarchy, scheme, periods);
  for (std::size_t i = 0; i < hierarchy.size(); ++i) {
    const auto row = full.row(static_cast<Eigen::Index>(i));
    const std::span<const double> series(row.data(), static_cast<std::size_t>(row.size()));
    for (std::size_t o = 0; o < scheme.p(); ++o) f.at(i, o) = temporal_aggregate(series, scheme.orders()[o]);
  }
  return f;
}

CoherenceReport coherence_error(const CrossTemporalForecast& f, const Hierarchy& hierarchy, const TemporalScheme& scheme) {
  f.check_complete();
  const auto rebuilt = rebuild_from_bottom(f.bottom_order1(hierarchy), hierarchy, scheme);
  CoherenceReport rep;
  for (std::size_t idx = 0; idx < f.values.size(); ++idx) {
    for (std::size_t t = 0; t < f.values[idx].size(); ++t) {
      const double gap = std::abs(f.values[idx][t] - rebuilt.values[idx][t]);
      rep.max_abs = std::max(rep.max_abs, gap);
      rep.max_rel = std::max(rep.max_rel, gap / std::max(1.0, std::abs(rebuilt.values[idx][t])));
    }
  }
  return rep;
}

bool is_exactly_coherent(const CrossTemporalForecast& f, const Hierarchy& hierarchy, const TemporalScheme& scheme) {
  return coherence_error(f, hierarchy, scheme).max_abs == 0.0;
}

std::size_t BaseForecastSet::fallback_count() const {
  return static_cast<std::size_t>(std::count(fallback.begin(), fallback.end(), true));
}

std::string forecasts_to_csv(const CrossTemporalForecast& f, const std::string& method, const std::string& window_id,
                             const std::optional<std::string>& recon_method, bool header) {
  std::ostringstream out;
  if (header) out << "node,order,step,value,method,window_id" << (recon_method ? ",recon_method" : "") << '\n';
  for (std::size_t i = 0; i < f.nodes.size(); ++i) {
    for (std::size_t o = 0; o < f.p(); ++o) {
      const auto& v = f.at(i, o);
      for (std::size_t j = 0; j < v.size(); ++j) {
        out << f.nodes[i] << ',' << f.orders[o] << ',' << (j + 1) << ',' << csv::format_double(v[j]) << ',' << method
            << ',' << window_id;
        if (recon_method) out << ',' << *recon_method;
        out << '\n';
      }
    }
  }
  return out.str();
}

std::string to_csv(const BaseForecastSet& set, bool header) {
  return forecasts_to_csv(set.forecasts, set.method, set.window_id, std::nullopt, header);
}

std::string to_csv(const ReconciledForecastSet& set, bool header) {
  return forecasts_to_csv(set.forecasts, set.base_method, set.window_id, set.method, header);
}

ParsedForecastCsv forecasts_from_csv(const std::string& text, const Hierarchy& hierarchy, const TemporalScheme& scheme) {
  const auto lines = csv::split_lines(text);
  if (lines.size() < 2) throw std::invalid_argument("forecast csv: empty");
  const auto header = csv::split(lines.front());
  const int c_node = csv::column(header, "node"), c_order = csv::column(header, "order"),
            c_step = csv::column(header, "step"), c_value = csv::column(header, "value"),
            c_method = csv::column(header, "method"), c_window = csv::column(header, "window_id"),
            c_recon = csv::column(header, "recon_method");
  if (c_node < 0 || c_order < 0 || c_step < 0 || c_value < 0) {
    throw std::invalid_argument("forecast csv: header needs node,order,step,value");
  }
  std::map<std::pair<std::size_t, std::size_t>, std::map<int, double>> cells;
  ParsedForecastCsv parsed;
  int max_steps_o1 = 0;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto f = csv::split(lines[r]);
    if (f.size() < header.size()) throw std::invalid_argument("forecast csv: short row " + std::to_string(r + 1));
    const auto node = hierarchy.index_of(csv::trim(f[static_cast<std::size_t>(c_node)]));
    if (!node) throw std::invalid_argument("forecast csv: unknown node '" + f[static_cast<std::size_t>(c_node)] + "'");
    const int order = std::stoi(f[static_cast<std::size_t>(c_order)]);
    const int step = std::stoi(f[static_cast<std::size_t>(c_step)]);
    const auto oi = scheme.order_index(order);
    const auto& vtext = f[static_cast<std::size_t>(c_value)];
    cells[{*node, oi}][step] = vtext == "NA" ? std::nan("") : std::stod(vtext);
    if (order == 1) max_steps_o1 = std::max(max_steps_o1, step);
    if (r == 1) {
      if (c_method >= 0) parsed.method = f[static_cast<std::size_t>(c_method)];
      if (c_window >= 0) parsed.window_id = f[static_cast<std::size_t>(c_window)];
      if (c_recon >= 0) parsed.recon_method = f[static_cast<std::size_t>(c_recon)];
    }
  }
  if (max_steps_o1 % scheme.m() != 0) throw std::invalid_argument("forecast csv: order-1 steps not a whole period");
  parsed.forecasts = CrossTemporalForecast::zeros(hierarchy, scheme, max_steps_o1 / scheme.m());
  for (std::size_t i = 0; i < hierarchy.size(); ++i) {
    for (std::size_t o = 0; o < scheme.p(); ++o) {
      auto it = cells.find({i, o});
      auto& v = parsed.forecasts.at(i, o);
      if (it == cells.end() || it->second.size() != v.size()) {
        throw std::invalid_argument("forecast csv: incomplete coverage for node " + hierarchy.id(i) + " order " +
                                    std::to_string(scheme.orders()[o]));
      }
      for (const auto& [step, value] : it->second) {
        if (step < 1 || static_cast<std::size_t>(step) > v.size()) throw std::invalid_argument("forecast csv: bad step");
        v[static_cast<std::size_t>(step - 1)] = value;
      }
    }
  }
  return parsed;
}

}  // namespace ctrecon
