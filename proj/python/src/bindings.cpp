#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ctrecon/baseforecast.hpp"
#include "ctrecon/data.hpp"
#include "ctrecon/evaluate.hpp"
#include "ctrecon/harness.hpp"
#include "ctrecon/linearrecon.hpp"
#include "ctrecon/mlrecon.hpp"

namespace py = pybind11;
using namespace ctrecon;

namespace {

struct PyHierarchy {
  HierarchySpec spec;
  Hierarchy tree;
};

PyHierarchy make_hierarchy(const HierarchySpec& spec) {
  const auto report = validate_hierarchy(spec);
  if (!report.ok) throw std::invalid_argument(report.summary());
  return {spec, Hierarchy::build(spec)};
}

std::vector<std::string> all_ids(const Hierarchy& h) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < h.size(); ++i) ids.push_back(h.id(i));
  return ids;
}

CrossTemporalForecast panel_window(const Panel& panel, const Hierarchy& h, const TemporalScheme& scheme, int start,
                                   int days) {
  auto f = CrossTemporalForecast::zeros(h, scheme, days);
  f.values = window_series(panel, h, scheme, start, days);
  return f;
}

}  // namespace

PYBIND11_MODULE(_ctrecon, m) {
  m.doc() = "Cross-temporal reconciliation of count forecasts";
  m.attr("__version__") = CTRECON_PY_VERSION;

  py::class_<PyHierarchy>(m, "Hierarchy")
      .def_static("from_csv", [](const std::string& text) { return make_hierarchy(HierarchySpec::parse_csv(text)); })
      .def_static("load", [](const std::filesystem::path& p) { return make_hierarchy(HierarchySpec::load_csv(p)); })
      .def_static(
          "two_level",
          [](const std::string& root, const std::vector<std::string>& leaves) {
            return make_hierarchy(HierarchySpec::two_level(root, leaves));
          },
          py::arg("root"), py::arg("leaves"))
      .def_property_readonly("size", [](const PyHierarchy& h) { return h.tree.size(); })
      .def_property_readonly("ids", [](const PyHierarchy& h) { return all_ids(h.tree); })
      .def_property_readonly("bottom_ids", [](const PyHierarchy& h) { return h.tree.bottom_ids(); })
      .def("summing_matrix", [](const PyHierarchy& h) { return build_summing_matrix(h.spec); })
      .def("to_csv", [](const PyHierarchy& h) { return h.spec.to_csv(); });

  py::class_<TemporalScheme>(m, "TemporalScheme")
      .def(py::init<int, std::vector<int>>(), py::arg("m"), py::arg("orders"))
      .def_property_readonly("m", &TemporalScheme::m)
      .def_property_readonly("orders", &TemporalScheme::orders)
      .def("summing_matrix", &TemporalScheme::summing_matrix)
      .def("__repr__", &TemporalScheme::describe);

  py::class_<Panel>(m, "Panel")
      .def_static("load", &Panel::load_csv)
      .def_static("from_csv", &Panel::parse_csv)
      .def_readonly("nodes", &Panel::nodes)
      .def_property_readonly("start_date", [](const Panel& p) { return format_date(p.start_day); })
      .def_property_readonly("slots_per_day", &Panel::slots_per_day)
      .def_property_readonly("days", &Panel::days)
      .def_property_readonly("values", [](const Panel& p) { return CountMatrix(p.values); })
      .def("content_hash", &Panel::content_hash)
      .def("to_csv", &Panel::to_csv)
      .def("save", [](const Panel& p, const std::filesystem::path& path) { p.save_csv(path); });

  m.def(
      "synthetic_panel",
      [](const std::vector<std::string>& nodes, std::vector<double> means, int days, int slots_per_day,
         std::uint64_t seed, bool noise, std::optional<int> shift_day, std::vector<std::string> shift_nodes,
         double shift_multiplier) {
        SyntheticConfig cfg;
        cfg.nodes = nodes;
        cfg.base_means = std::move(means);
        cfg.days = days;
        cfg.grid = SlotGrid{slots_per_day, 24 * 60 / slots_per_day, 0};
        cfg.daily_profile = default_daily_profile(slots_per_day);
        cfg.noise = noise ? NoiseLaw::kPoisson : NoiseLaw::kNone;
        cfg.seed = seed;
        if (shift_day) cfg.shift = ShiftSpec{std::move(shift_nodes), *shift_day, shift_multiplier};
        return generate_synthetic(cfg);
      },
      py::arg("nodes"), py::arg("means"), py::arg("days"), py::arg("slots_per_day") = 48, py::arg("seed") = 1,
      py::arg("noise") = true, py::arg("shift_day") = py::none(), py::arg("shift_nodes") = std::vector<std::string>{},
      py::arg("shift_multiplier") = 1.0);

  py::class_<CrossTemporalForecast>(m, "CrossTemporalForecast")
      .def_readonly("nodes", &CrossTemporalForecast::nodes)
      .def_readonly("orders", &CrossTemporalForecast::orders)
      .def_readonly("m", &CrossTemporalForecast::m)
      .def_readonly("periods", &CrossTemporalForecast::periods)
      .def(
          "series",
          [](const CrossTemporalForecast& f, const std::string& node, int order) {
            const auto n = std::find(f.nodes.begin(), f.nodes.end(), node);
            const auto k = std::find(f.orders.begin(), f.orders.end(), order);
            if (n == f.nodes.end() || k == f.orders.end()) throw py::key_error(node + "@" + std::to_string(order));
            return f.at(static_cast<std::size_t>(n - f.nodes.begin()), static_cast<std::size_t>(k - f.orders.begin()));
          },
          py::arg("node"), py::arg("order"))
      .def("stacked", &CrossTemporalForecast::stacked);

  m.def(
      "base_forecasts",
      [](const Panel& panel, const PyHierarchy& h, const TemporalScheme& scheme, const std::string& method, int start,
         int estimation_days, int horizon_days, int threads) {
        py::gil_scoped_release release;
        return produce_base_forecasts(panel, h.tree, scheme, parse_base_method(method),
                                      ForecastWindow{start, estimation_days, horizon_days},
                                      BaseForecastOptions{threads, true})
            .forecasts;
      },
      py::arg("panel"), py::arg("hierarchy"), py::arg("scheme"), py::arg("method") = "naive", py::arg("start") = 0,
      py::arg("estimation_days") = 140, py::arg("horizon_days") = 7, py::arg("threads") = 1);

  m.def(
      "reconcile",
      [](const Panel& panel, const PyHierarchy& h, const TemporalScheme& scheme, const std::string& base,
         const std::string& recon, int start, int estimation_days, int horizon_days) {
        const auto method = parse_linear_method(recon);
        if (!method) throw std::invalid_argument("reconcile: unknown linear method '" + recon + "'");
        py::gil_scoped_release release;
        const auto set = produce_base_forecasts(panel, h.tree, scheme, parse_base_method(base),
                                                ForecastWindow{start, estimation_days, horizon_days}, {});
        return reconcile(*method, set, h.tree, scheme).forecasts;
      },
      py::arg("panel"), py::arg("hierarchy"), py::arg("scheme"), py::arg("base") = "naive", py::arg("recon") = "oct",
      py::arg("start") = 0, py::arg("estimation_days") = 140, py::arg("horizon_days") = 7);

  m.def(
      "actuals",
      [](const Panel& panel, const PyHierarchy& h, const TemporalScheme& scheme, int start, int days) {
        return panel_window(panel, h.tree, scheme, start, days);
      },
      py::arg("panel"), py::arg("hierarchy"), py::arg("scheme"), py::arg("start"), py::arg("days"));

  m.def(
      "coherence_error",
      [](const CrossTemporalForecast& f, const PyHierarchy& h, const TemporalScheme& scheme) {
        const auto r = coherence_error(f, h.tree, scheme);
        return std::pair{r.max_abs, r.max_rel};
      },
      "(max_abs, max_rel) gap between every position and its bottom order-1 sum");

  m.def(
      "cross_temporal_summing_matrix",
      [](const PyHierarchy& h, const TemporalScheme& scheme) { return cross_temporal_summing_matrix(h.tree, scheme); });

  m.def(
      "gls_reconcile",
      [](const Eigen::VectorXd& base, const Eigen::MatrixXd& S, const Eigen::MatrixXd& W) {
        CovarianceEstimate est;
        est.kind = CovarianceKind::kWlsv;
        est.W = W;
        return gls_reconcile(base, S, est);
      },
      py::arg("base"), py::arg("S"), py::arg("W"));

  m.def(
      "wape", [](const std::vector<double>& a, const std::vector<double>& f) { return wape(a, f); }, py::arg("actual"),
      py::arg("forecast"));
  m.def(
      "mase",
      [](const std::vector<double>& a, const std::vector<double>& f, const std::vector<double>& insample, int lag) {
        return mase(a, f, insample, lag);
      },
      py::arg("actual"), py::arg("forecast"), py::arg("insample"), py::arg("lag"));

  m.def(
      "feature_names",
      [](const PyHierarchy& h, const TemporalScheme& scheme, const std::string& variant, std::optional<std::string> focal) {
        std::optional<std::size_t> node;
        if (focal) node = h.tree.index_of(*focal);
        return FeatureLayout::make(h.tree, scheme, parse_feature_variant(variant), node).names;
      },
      py::arg("hierarchy"), py::arg("scheme"), py::arg("variant") = "compact", py::arg("focal") = py::none());

  m.def(
      "outer_count",
      [](int panel_days, int Q, int H, int R, int step) { return WindowPlan{Q, H, R, step}.outer_count(panel_days); },
      py::arg("panel_days"), py::arg("Q") = 140, py::arg("H") = 7, py::arg("R") = 4, py::arg("step") = 7);

  m.def(
      "run_experiment",
      [](const std::string& config_json, const std::filesystem::path& base_dir, bool write) {
        const auto config = ExperimentConfig::from_json(config_json, base_dir);
        config.validate();
        const auto h = Hierarchy::build(HierarchySpec::load_csv(config.hierarchy));
        const auto panel = Panel::load_csv(config.panel);
        ExperimentResult result;
        {
          py::gil_scoped_release release;
          result = run_experiment(panel, h, config);
          if (write) write_outputs(result, config, panel, h, config.output);
        }
        py::dict out;
        out["methods"] = result.methods;
        out["window_ids"] = result.window_ids;
        out["metrics_csv"] = result.metrics.to_csv();
        out["levels_wape_csv"] = level_table_csv(result.levels, config.scheme(), true);
        out["levels_mase_csv"] = level_table_csv(result.levels, config.scheme(), false);
        py::list errors;
        for (const auto& e : result.errors) errors.append(py::make_tuple(e.method, e.outer, e.message));
        out["errors"] = errors;
        return out;
      },
      py::arg("config_json"), py::arg("base_dir") = std::filesystem::path{}, py::arg("write") = false,
      "Runs the rolling-window experiment described by a JSON config; returns metrics and level tables as CSV text");

  m.def("ratio_table", &ratio_table_csv, py::arg("reference_levels_csv"), py::arg("variant_levels_csv"));
}
