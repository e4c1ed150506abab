#include <algorithm>
#include <cstdio>
#include <iostream>
#include <regex>
#include <sstream>

#include "CLI11.hpp"

#include "ctrecon/baseforecast.hpp"
#include "ctrecon/csv.hpp"
#include "ctrecon/data.hpp"
#include "ctrecon/evaluate.hpp"
#include "ctrecon/harness.hpp"
#include "ctrecon/linearrecon.hpp"
#include "ctrecon/util.hpp"

using namespace ctrecon;

namespace {

std::vector<int> parse_ints(const std::string& text) {
  std::vector<int> out;
  for (const auto& f : csv::split(text)) out.push_back(std::stoi(csv::trim(f)));
  return out;
}

std::vector<std::string> parse_names(const std::string& text) {
  std::vector<std::string> out;
  for (const auto& f : csv::split(text)) out.push_back(csv::trim(f));
  return out;
}

Hierarchy load_hierarchy(const std::string& path) {
  const auto spec = HierarchySpec::load_csv(path);
  const auto report = validate_hierarchy(spec);
  for (const auto& issue : report.issues) {
    if (!issue.is_error) std::cerr << "warning: " << issue.message << '\n';
  }
  if (!report.ok) throw std::invalid_argument("hierarchy: " + report.summary());
  return Hierarchy::build(spec);
}

// A day is either an index from the panel start or a YYYY-MM-DD date.
int resolve_day(const std::string& text, const Panel& panel) {
  if (text.find('-') != std::string::npos) return static_cast<int>((parse_date(text) - panel.start_day).count());
  return std::stoi(text);
}

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    csv::write_file(path, text);
  }
}

struct WindowArgs {
  int start = 0;
  int estimation = 140;
  int horizon = 7;
};

void add_window_options(CLI::App* cmd, WindowArgs& w) {
  cmd->add_option("--start", w.start, "First estimation day (index from panel start)");
  cmd->add_option("--est-days", w.estimation, "Estimation length in days");
  cmd->add_option("--horizon", w.horizon, "Forecast horizon in days");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-temporal forecast reconciliation toolkit"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Bin trip records into a balanced panel");
  std::vector<std::string> trip_files;
  std::string cells_path, station_map, ingest_out, ingest_start;
  int slots = 48, slot_minutes = 30, day_start = 0, ingest_days = 0;
  ingest->add_option("--trips", trip_files, "Trip CSV files (started_at plus cell or station column)")->required();
  ingest->add_option("--hierarchy", cells_path, "Hierarchy CSV whose leaves are the cell ids");
  ingest->add_option("--station-map", station_map, "station_id,cell_id map; keys trips by station");
  ingest->add_option("--slots", slots, "Slots per day");
  ingest->add_option("--slot-minutes", slot_minutes, "Minutes per slot");
  ingest->add_option("--day-start", day_start, "Minutes after midnight of the first slot");
  ingest->add_option("--start-date", ingest_start, "First panel day (YYYY-MM-DD)");
  ingest->add_option("--days", ingest_days, "Panel length in days");
  ingest->add_option("-o,--out", ingest_out, "Panel CSV output")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a seeded synthetic demand panel");
  std::string synth_hierarchy, synth_out, synth_hierarchy_out, synth_start = "2023-01-02", shift_nodes;
  int synth_leaves = 6, synth_zones = 2, synth_days = 84, synth_slots = 16, shift_day = -1;
  double synth_mean = 4.0, shift_multiplier = 0.1, shift_fraction = 0.0;
  std::uint64_t synth_seed = 1;
  bool no_noise = false;
  synth->add_option("--hierarchy", synth_hierarchy, "Use the leaves of this hierarchy CSV");
  synth->add_option("--leaves", synth_leaves, "Leaf count when no hierarchy is given");
  synth->add_option("--zones", synth_zones, "Zone count when no hierarchy is given");
  synth->add_option("--hierarchy-out", synth_hierarchy_out, "Write the generated hierarchy here");
  synth->add_option("--days", synth_days, "Panel length in days");
  synth->add_option("--slots", synth_slots, "Slots per day");
  synth->add_option("--mean", synth_mean, "Mean demand per slot of the first leaf (later leaves scale up)");
  synth->add_option("--start-date", synth_start, "First day (YYYY-MM-DD)");
  synth->add_option("--seed", synth_seed, "Random seed");
  synth->add_flag("--no-noise", no_noise, "Expected values instead of Poisson draws");
  synth->add_option("--shift-day", shift_day, "Day index of a level shift");
  synth->add_option("--shift-multiplier", shift_multiplier, "Multiplier applied from the shift day on");
  synth->add_option("--shift-fraction", shift_fraction, "Fraction of leaves that shift (first leaves first)");
  synth->add_option("--shift-nodes", shift_nodes, "Comma-separated leaves that shift");
  synth->add_option("-o,--out", synth_out, "Panel CSV output")->required();

  // forecast
  auto* forecast = app.add_subcommand("forecast", "Base forecasts for one window");
  std::string panel_path, hierarchy_path, orders_text, base_name = "naive", out_path;
  int threads = 1;
  WindowArgs fw;
  forecast->add_option("--panel", panel_path, "Panel CSV")->required();
  forecast->add_option("--hierarchy", hierarchy_path, "Hierarchy CSV")->required();
  forecast->add_option("--orders", orders_text, "Temporal orders, e.g. 1,2,48 (default: 1 and slots per day)");
  forecast->add_option("--base", base_name, "naive|ets|sarima|combo");
  forecast->add_option("--threads", threads, "Worker threads");
  forecast->add_option("-o,--out", out_path, "Forecast CSV output (stdout when omitted)");
  add_window_options(forecast, fw);

  // reconcile
  auto* reconcile_cmd = app.add_subcommand("reconcile", "Linear reconciliation of one window's base forecasts");
  std::string recon_name = "oct";
  WindowArgs rw;
  reconcile_cmd->add_option("--panel", panel_path, "Panel CSV")->required();
  reconcile_cmd->add_option("--hierarchy", hierarchy_path, "Hierarchy CSV")->required();
  reconcile_cmd->add_option("--orders", orders_text, "Temporal orders");
  reconcile_cmd->add_option("--base", base_name, "naive|ets|sarima|combo");
  reconcile_cmd->add_option("--recon", recon_name, "bu|tcs|cst|ite|oct (tree ensembles need `run`)");
  reconcile_cmd->add_option("--threads", threads, "Worker threads");
  reconcile_cmd->add_option("-o,--out", out_path, "Forecast CSV output");
  add_window_options(reconcile_cmd, rw);

  // evaluate
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a forecast CSV against the panel");
  std::string forecast_csv;
  evaluate_cmd->add_option("--forecasts", forecast_csv, "CSV written by forecast or reconcile")->required();
  evaluate_cmd->add_option("--panel", panel_path, "Panel CSV")->required();
  evaluate_cmd->add_option("--hierarchy", hierarchy_path, "Hierarchy CSV")->required();
  evaluate_cmd->add_option("--orders", orders_text, "Temporal orders");
  evaluate_cmd->add_option("-o,--out", out_path, "Metrics CSV output");

  // run
  auto* run = app.add_subcommand("run", "Full rolling-window experiment");
  std::string config_path, run_base, run_recon, run_features, run_windows, run_periods, run_out, run_tune, run_cache_dir;
  std::optional<std::uint64_t> run_seed;
  std::optional<int> run_step, run_threads, run_max_outer, run_tune_budget;
  bool no_cache = false;
  run->add_option("--config", config_path, "Experiment config (JSON)");
  run->add_option("--panel", panel_path, "Panel CSV (overrides the config)");
  run->add_option("--hierarchy", hierarchy_path, "Hierarchy CSV (overrides the config)");
  run->add_option("--orders", orders_text, "Temporal orders");
  run->add_option("--seed", run_seed, "Random seed");
  run->add_option("--base", run_base, "Comma-separated base methods");
  run->add_option("--recon", run_recon, "Comma-separated reconciliation methods");
  run->add_option("--features", run_features, "compact|complete");
  run->add_option("--windows", run_windows, "Q,H,R in days");
  run->add_option("--step", run_step, "Outer advance in days");
  run->add_option("--max-outer", run_max_outer, "Stop after this many outer iterations");
  run->add_option("--periods", run_periods, "d1,d2 shift split (day indices or dates)");
  run->add_option("--tune", run_tune, "off|grid|random");
  run->add_option("--tune-budget", run_tune_budget, "Tuning candidates per model");
  run->add_option("--threads", run_threads, "Worker threads");
  run->add_flag("--no-cache", no_cache, "Recompute every base forecast");
  run->add_option("--cache-dir", run_cache_dir, "Persist base forecasts here");
  run->add_option("-o,--out", run_out, "Output directory");

  // report
  auto* report = app.add_subcommand("report", "Ratio table of two runs (variant over reference)");
  std::string ref_dir, var_dir, metric = "wape";
  report->add_option("--reference", ref_dir, "Reference run directory")->required();
  report->add_option("--variant", var_dir, "Variant run directory")->required();
  report->add_option("--metric", metric, "wape|mase")->check(CLI::IsMember({"wape", "mase"}));
  report->add_option("-o,--out", out_path, "Output CSV");

  CLI11_PARSE(app, argc, argv);

  auto scheme_for = [&](const Panel& panel) {
    std::vector<int> orders = orders_text.empty() ? std::vector<int>{1, panel.slots_per_day()} : parse_ints(orders_text);
    if (orders.size() == 2 && orders[0] == orders[1]) orders.pop_back();
    return TemporalScheme(panel.slots_per_day(), orders);
  };

  try {
    if (*ingest) {
      std::vector<TripRecord> records;
      for (const auto& f : trip_files) {
        auto part = read_trip_csv(f, !station_map.empty());
        records.insert(records.end(), part.begin(), part.end());
      }
      CellMap map;
      if (!station_map.empty()) {
        map = load_cell_map(station_map);
      } else if (!cells_path.empty()) {
        map = identity_cell_map(load_hierarchy(cells_path).bottom_ids());
      } else {
        std::set<std::string> keys;
        for (const auto& r : records) keys.insert(r.key);
        map = identity_cell_map({keys.begin(), keys.end()});
      }
      IngestScheme scheme;
      scheme.grid = SlotGrid{slots, slot_minutes, day_start};
      if (!ingest_start.empty()) scheme.start_day = parse_date(ingest_start);
      if (ingest_days > 0) scheme.days = ingest_days;
      const auto result = ingest_trips(records, map, scheme);
      result.panel.save_csv(ingest_out);
      const auto& r = result.report;
      std::cerr << "read " << r.read << " kept " << r.kept << " dropped " << r.dropped() << " (outside window "
                << r.outside_window << ", unknown cell " << r.unknown_cell << ", bad timestamp " << r.bad_timestamp
                << ")\n";
    } else if (*synth) {
      std::vector<std::string> leaves;
      if (!synth_hierarchy.empty()) {
        leaves = load_hierarchy(synth_hierarchy).bottom_ids();
      } else {
        HierarchySpec spec;
        spec.records.push_back({"market", "", "market"});
        for (int z = 0; z < synth_zones; ++z) spec.records.push_back({"zone" + std::to_string(z), "market", "zone"});
        for (int a = 0; a < synth_leaves; ++a) {
          leaves.push_back("cell" + std::to_string(a));
          spec.records.push_back({leaves.back(), "zone" + std::to_string(a % std::max(1, synth_zones)), "cell"});
        }
        if (synth_zones < 1) {
          spec = HierarchySpec::two_level("market", leaves, "market", "cell");
        }
        if (!synth_hierarchy_out.empty()) csv::write_file(synth_hierarchy_out, spec.to_csv());
      }
      SyntheticConfig cfg;
      cfg.nodes = leaves;
      for (std::size_t i = 0; i < leaves.size(); ++i) cfg.base_means.push_back(synth_mean * (1.0 + 0.25 * static_cast<double>(i)));
      cfg.start_day = parse_date(synth_start);
      cfg.days = synth_days;
      cfg.grid = SlotGrid{synth_slots, 24 * 60 / synth_slots, 0};
      cfg.daily_profile = default_daily_profile(synth_slots);
      cfg.weekly_multipliers = {1.0, 1.05, 1.05, 1.1, 1.15, 0.8, 0.7};
      cfg.noise = no_noise ? NoiseLaw::kNone : NoiseLaw::kPoisson;
      cfg.seed = synth_seed;
      if (shift_day >= 0) {
        ShiftSpec shift;
        shift.shift_day = shift_day;
        shift.multiplier = shift_multiplier;
        if (!shift_nodes.empty()) {
          shift.nodes = parse_names(shift_nodes);
        } else {
          const auto count = static_cast<std::size_t>(std::lround(shift_fraction * static_cast<double>(leaves.size())));
          shift.nodes.assign(leaves.begin(), leaves.begin() + static_cast<std::ptrdiff_t>(std::min(count, leaves.size())));
        }
        cfg.shift = shift;
      }
      generate_synthetic(cfg).save_csv(synth_out);
    } else if (*forecast || *reconcile_cmd) {
      const auto h = load_hierarchy(hierarchy_path);
      const auto panel = Panel::load_csv(panel_path);
      const auto scheme = scheme_for(panel);
      const auto& w = *forecast ? fw : rw;
      const ForecastWindow window{w.start, w.estimation, w.horizon};
      const auto base = produce_base_forecasts(panel, h, scheme, parse_base_method(base_name), window,
                                               BaseForecastOptions{resolve_threads(threads), true});
      if (base.fallback_count() > 0) std::cerr << base.fallback_count() << " series fell back to the seasonal naive\n";
      if (*forecast) {
        write_or_print(out_path, to_csv(base));
      } else {
        const auto method = parse_linear_method(recon_name);
        if (!method) throw std::invalid_argument("reconcile: '" + recon_name + "' is not a linear method; use `run`");
        LinearDiagnostics diag;
        auto rs = reconcile(*method, base, h, scheme, {}, &diag);
        for (const auto& flag : diag.flags) std::cerr << "note: " << flag << '\n';
        write_or_print(out_path, to_csv(rs));
      }
    } else if (*evaluate_cmd) {
      const auto h = load_hierarchy(hierarchy_path);
      const auto panel = Panel::load_csv(panel_path);
      const auto scheme = scheme_for(panel);
      const auto parsed = forecasts_from_csv(csv::read_file(forecast_csv), h, scheme);
      std::smatch m;
      const std::regex id_re(R"(d(\d+)-q(\d+)-h(\d+))");
      if (!std::regex_match(parsed.window_id, m, id_re)) {
        throw std::invalid_argument("evaluate: cannot read window id '" + parsed.window_id + "'");
      }
      const int start = std::stoi(m[1]), est = std::stoi(m[2]), horizon = std::stoi(m[3]);
      auto slice = [&](int from, int days) {
        auto f = CrossTemporalForecast::zeros(h, scheme, days);
        f.values = window_series(panel, h, scheme, from, days);
        return f;
      };
      const auto label = parsed.recon_method.empty() ? parsed.method : parsed.method + ":" + parsed.recon_method;
      const auto table = evaluate_forecasts(label, parsed.forecasts, slice(start + est, horizon), slice(start, est), h,
                                            scheme, "all");
      write_or_print(out_path, table.to_csv());
      std::cerr << level_table_csv(level_summary(table, h, scheme), scheme, true);
    } else if (*run) {
      ExperimentConfig config = config_path.empty() ? ExperimentConfig{} : ExperimentConfig::load(config_path);
      if (!panel_path.empty()) config.panel = panel_path;
      if (!hierarchy_path.empty()) config.hierarchy = hierarchy_path;
      if (config.panel.empty() || config.hierarchy.empty()) {
        throw std::invalid_argument("run: a panel and a hierarchy are required (config or flags)");
      }
      const auto h = load_hierarchy(config.hierarchy.string());
      const auto panel = Panel::load_csv(config.panel);
      if (!orders_text.empty() || config_path.empty()) {
        const auto s = scheme_for(panel);
        config.m = s.m();
        config.orders = s.orders();
      }
      if (run_seed) config.seed = *run_seed;
      if (!run_base.empty()) config.base = parse_names(run_base);
      if (!run_recon.empty()) config.recon = parse_names(run_recon);
      if (!run_features.empty()) config.features = parse_feature_variant(run_features);
      if (!run_windows.empty()) {
        const auto w = parse_ints(run_windows);
        if (w.size() != 3) throw std::invalid_argument("--windows expects Q,H,R");
        config.plan.Q = w[0];
        config.plan.H = w[1];
        config.plan.R = w[2];
        if (!run_step) config.plan.step = w[1];
      }
      if (run_step) config.plan.step = *run_step;
      if (run_max_outer) config.max_outer = *run_max_outer;
      if (!run_periods.empty()) {
        const auto p = parse_names(run_periods);
        if (p.size() != 2) throw std::invalid_argument("--periods expects d1,d2");
        config.periods = std::pair{resolve_day(p[0], panel), resolve_day(p[1], panel)};
      }
      if (!run_tune.empty()) config.tune.mode = parse_tune_mode(run_tune);
      if (run_tune_budget) config.tune.budget = *run_tune_budget;
      if (run_threads) config.threads = resolve_threads(*run_threads);
      if (no_cache) config.cache = false;
      if (!run_cache_dir.empty()) config.cache_dir = run_cache_dir;
      if (!run_out.empty()) config.output = run_out;
      config.validate();
      const auto result = run_experiment(panel, h, config);
      write_outputs(result, config, panel, h, config.output);
      for (const auto& e : result.errors) std::cerr << "error: " << e.method << " (outer " << e.outer << "): " << e.message << '\n';
      std::cerr << result.window_ids.size() << " outer iterations, " << result.methods.size() << " methods, cache hits "
                << result.cache_hits << ", written to " << config.output.string() << '\n';
      std::cout << level_table_csv(result.levels, config.scheme(), true);
    } else if (*report) {
      const std::string file = "levels_" + metric + ".csv";
      write_or_print(out_path, ratio_table_csv(csv::read_file(std::filesystem::path(ref_dir) / file),
                                               csv::read_file(std::filesystem::path(var_dir) / file)));
    }
  } catch (const std::exception& e) {
    std::cerr << "ctrecon: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
