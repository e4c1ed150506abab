#include "ctrecon/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ctrecon/csv.hpp"
#include "ctrecon/util.hpp"

namespace ctrecon {

namespace {

bool parse_int(std::string_view s, int& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::optional<Day> try_parse_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  int y = 0, mo = 0, d = 0;
  if (!parse_int(s.substr(0, 4), y) || !parse_int(s.substr(5, 2), mo) || !parse_int(s.substr(8, 2), d)) {
    return std::nullopt;
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(mo)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return Day{ymd};
}

std::string two(int v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02d", v);
  return buf;
}

}  // namespace

Day parse_date(const std::string& text) {
  auto d = try_parse_date(csv::trim(text));
  if (!d) throw std::invalid_argument("invalid date '" + text + "' (expected YYYY-MM-DD)");
  return *d;
}

std::string format_date(Day day) {
  const std::chrono::year_month_day ymd{day};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

std::optional<Timestamp> parse_timestamp(const std::string& raw) {
  const std::string text = csv::trim(raw);
  if (text.size() < 16) return std::nullopt;
  auto day = try_parse_date(std::string_view(text).substr(0, 10));
  if (!day || (text[10] != 'T' && text[10] != ' ')) return std::nullopt;
  int hh = 0, mm = 0;
  if (text[13] != ':' || !parse_int(std::string_view(text).substr(11, 2), hh) ||
      !parse_int(std::string_view(text).substr(14, 2), mm)) {
    return std::nullopt;
  }
  double seconds = 0.0;
  if (text.size() >= 19 && text[16] == ':') {
    // seconds with optional fraction; trailing zone designators are ignored
    std::size_t end = 17;
    while (end < text.size() && (std::isdigit(static_cast<unsigned char>(text[end])) || text[end] == '.')) ++end;
    try {
      seconds = std::stod(text.substr(17, end - 17));
    } catch (...) {
      return std::nullopt;
    }
  }
  if (hh < 0 || hh > 23 || mm < 0 || mm > 59 || seconds < 0.0 || seconds >= 61.0) return std::nullopt;
  return Timestamp{*day, hh * 60.0 + mm + seconds / 60.0};
}

std::optional<int> SlotGrid::slot_of(double minutes_after_midnight) const {
  const double offset = minutes_after_midnight - day_start_minutes;
  if (offset < 0.0) return std::nullopt;
  const auto slot = static_cast<int>(std::floor(offset / slot_minutes));
  if (slot >= slots_per_day) return std::nullopt;
  return slot;
}

std::string Panel::timestamp(std::size_t slot) const {
  const auto day = start_day + std::chrono::days(static_cast<int>(slot / static_cast<std::size_t>(grid.slots_per_day)));
  const int minutes = grid.day_start_minutes +
                      static_cast<int>(slot % static_cast<std::size_t>(grid.slots_per_day)) * grid.slot_minutes;
  return format_date(day) + "T" + two(minutes / 60) + ":" + two(minutes % 60);
}

std::uint64_t Panel::content_hash() const {
  std::uint64_t h = fnv1a("panel-v1");
  for (const auto& id : nodes) h = fnv1a(id + '\x1f', h);
  h = fnv1a(format_date(start_day), h);
  const std::int64_t dims[] = {grid.slots_per_day, grid.slot_minutes, grid.day_start_minutes, values.rows(),
                               values.cols()};
  h = fnv1a(std::string_view(reinterpret_cast<const char*>(dims), sizeof(dims)), h);
  return fnv1a(std::string_view(reinterpret_cast<const char*>(values.data()),
                                static_cast<std::size_t>(values.size()) * sizeof(std::int64_t)),
               h);
}

Panel Panel::reorder(const std::vector<std::string>& order) const {
  Panel out = *this;
  out.nodes = order;
  out.values.resize(static_cast<Eigen::Index>(order.size()), values.cols());
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto it = std::find(nodes.begin(), nodes.end(), order[i]);
    if (it == nodes.end()) throw std::invalid_argument("panel has no node '" + order[i] + "'");
    out.values.row(static_cast<Eigen::Index>(i)) = values.row(it - nodes.begin());
  }
  return out;
}

void Panel::check() const {
  if (static_cast<std::size_t>(values.rows()) != nodes.size()) {
    throw std::invalid_argument("panel: row count does not match node count");
  }
  if (grid.slots_per_day <= 0 || values.cols() % grid.slots_per_day != 0) {
    throw std::invalid_argument("panel: slot count is not a whole number of days");
  }
  if (values.size() > 0 && values.minCoeff() < 0) throw std::invalid_argument("panel: negative count");
  if (grid.slot_minutes * grid.slots_per_day + grid.day_start_minutes > 24 * 60) {
    throw std::invalid_argument("panel: slot grid exceeds one day");
  }
}

std::string Panel::to_csv() const {
  std::ostringstream out;
  out << "timestamp";
  for (const auto& id : nodes) out << ',' << id;
  out << '\n';
  for (std::size_t t = 0; t < slot_count(); ++t) {
    out << timestamp(t);
    for (Eigen::Index i = 0; i < values.rows(); ++i) out << ',' << values(i, static_cast<Eigen::Index>(t));
    out << '\n';
  }
  return out.str();
}

void Panel::save_csv(const std::filesystem::path& path) const { csv::write_file(path, to_csv()); }

Panel Panel::parse_csv(const std::string& text) {
  const auto lines = csv::split_lines(text);
  if (lines.size() < 2) throw std::invalid_argument("panel csv: needs a header and at least one row");
  const auto header = csv::split(lines.front());
  if (header.size() < 2) throw std::invalid_argument("panel csv: needs at least one node column");
  Panel panel;
  for (std::size_t c = 1; c < header.size(); ++c) panel.nodes.push_back(csv::trim(header[c]));

  std::vector<Timestamp> stamps;
  const std::size_t rows = lines.size() - 1;
  panel.values.resize(static_cast<Eigen::Index>(panel.nodes.size()), static_cast<Eigen::Index>(rows));
  for (std::size_t r = 0; r < rows; ++r) {
    const auto fields = csv::split(lines[r + 1]);
    if (fields.size() != header.size()) {
      throw std::invalid_argument("panel csv: row " + std::to_string(r + 2) + " has wrong field count");
    }
    auto ts = parse_timestamp(fields[0]);
    if (!ts) throw std::invalid_argument("panel csv: bad timestamp '" + fields[0] + "'");
    stamps.push_back(*ts);
    for (std::size_t c = 1; c < fields.size(); ++c) {
      std::int64_t v = 0;
      const auto f = csv::trim(fields[c]);
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        throw std::invalid_argument("panel csv: non-integer cell '" + f + "' in row " + std::to_string(r + 2));
      }
      panel.values(static_cast<Eigen::Index>(c - 1), static_cast<Eigen::Index>(r)) = v;
    }
  }

  panel.start_day = stamps.front().day;
  int per_day = 0;
  while (static_cast<std::size_t>(per_day) < stamps.size() && stamps[static_cast<std::size_t>(per_day)].day == panel.start_day) {
    ++per_day;
  }
  panel.grid.slots_per_day = per_day;
  panel.grid.day_start_minutes = static_cast<int>(std::lround(stamps.front().minutes));
  panel.grid.slot_minutes =
      per_day > 1 ? static_cast<int>(std::lround(stamps[1].minutes - stamps[0].minutes)) : 24 * 60;
  for (std::size_t t = 0; t < stamps.size(); ++t) {
    if (panel.timestamp(t) != format_date(stamps[t].day) + "T" + two(static_cast<int>(stamps[t].minutes) / 60) +
                                  ":" + two(static_cast<int>(stamps[t].minutes) % 60)) {
      throw std::invalid_argument("panel csv: timestamps are not a regular grid at row " + std::to_string(t + 2));
    }
  }
  panel.check();
  return panel;
}

Panel Panel::load_csv(const std::filesystem::path& path) { return parse_csv(csv::read_file(path)); }

CellMap identity_cell_map(const std::vector<std::string>& cells) {
  CellMap map;
  for (const auto& c : cells) map[c] = c;
  return map;
}

CellMap load_cell_map(const std::filesystem::path& path) {
  const auto lines = csv::read_lines(path);
  if (lines.empty()) throw std::invalid_argument("cell map is empty");
  const auto header = csv::split(lines.front());
  const int c_station = csv::column(header, "station_id");
  const int c_cell = csv::column(header, "cell_id");
  if (c_station < 0 || c_cell < 0) throw std::invalid_argument("cell map header must contain station_id,cell_id");
  CellMap map;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = csv::split(lines[i]);
    if (f.size() <= static_cast<std::size_t>(std::max(c_station, c_cell))) continue;
    map[csv::trim(f[c_station])] = csv::trim(f[c_cell]);
  }
  return map;
}

std::vector<TripRecord> read_trip_csv(const std::filesystem::path& path, bool use_station_column) {
  const auto lines = csv::read_lines(path);
  if (lines.empty()) return {};
  const auto header = csv::split(lines.front());
  const int c_time = csv::column(header, "started_at");
  const int c_key = csv::column(header, use_station_column ? "start_station_id" : "cell_id");
  if (c_time < 0 || c_key < 0) {
    throw std::invalid_argument(std::string("trip csv header must contain started_at and ") +
                                (use_station_column ? "start_station_id" : "cell_id"));
  }
  std::vector<TripRecord> out;
  out.reserve(lines.size() - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = csv::split(lines[i]);
    TripRecord rec;
    if (static_cast<int>(f.size()) > c_time) rec.started_at = f[static_cast<std::size_t>(c_time)];
    if (static_cast<int>(f.size()) > c_key) rec.key = csv::trim(f[static_cast<std::size_t>(c_key)]);
    out.push_back(std::move(rec));
  }
  return out;
}

IngestResult ingest_trips(std::span<const TripRecord> records, const CellMap& cell_map, const IngestScheme& scheme) {
  const auto& grid = scheme.grid;
  if (grid.slots_per_day <= 0 || grid.slot_minutes <= 0) throw std::invalid_argument("ingest: invalid slot grid");

  std::set<std::string> cell_set;
  for (const auto& [key, cell] : cell_map) cell_set.insert(cell);
  std::vector<std::string> cells(cell_set.begin(), cell_set.end());

  struct Parsed {
    Day day;
    int slot;
    std::size_t cell;
  };
  IngestResult result;
  auto& rep = result.report;
  std::vector<Parsed> kept;
  kept.reserve(records.size());
  for (const auto& rec : records) {
    ++rep.read;
    const auto ts = parse_timestamp(rec.started_at);
    if (!ts) {
      ++rep.bad_timestamp;
      continue;
    }
    auto it = cell_map.find(rec.key);
    if (it == cell_map.end()) {
      ++rep.unknown_cell;
      continue;
    }
    const auto slot = grid.slot_of(ts->minutes);
    if (!slot) {
      ++rep.outside_window;
      continue;
    }
    const auto cell = static_cast<std::size_t>(std::lower_bound(cells.begin(), cells.end(), it->second) - cells.begin());
    kept.push_back({ts->day, *slot, cell});
  }

  Day first = scheme.start_day.value_or(Day{});
  if (!scheme.start_day) {
    first = kept.empty() ? parse_date("1970-01-01") : kept.front().day;
    for (const auto& p : kept) first = std::min(first, p.day);
  }
  int days = scheme.days.value_or(0);
  if (!scheme.days) {
    for (const auto& p : kept) days = std::max(days, static_cast<int>((p.day - first).count()) + 1);
    days = std::max(days, 1);
  }

  Panel& panel = result.panel;
  panel.nodes = cells;
  panel.start_day = first;
  panel.grid = grid;
  panel.values = CountMatrix::Zero(static_cast<Eigen::Index>(cells.size()),
                                   static_cast<Eigen::Index>(days) * grid.slots_per_day);
  for (const auto& p : kept) {
    const auto day = (p.day - first).count();
    if (day < 0 || day >= days) {
      ++rep.outside_window;
      continue;
    }
    ++rep.kept;
    panel.values(static_cast<Eigen::Index>(p.cell), static_cast<Eigen::Index>(day * grid.slots_per_day + p.slot)) += 1;
  }
  return result;
}

Panel merge_panels(const Panel& a, const Panel& b) {
  if (a.nodes != b.nodes || !(a.grid == b.grid) || a.start_day != b.start_day || a.values.cols() != b.values.cols()) {
    throw std::invalid_argument("merge_panels: shards do not share nodes, grid and date range");
  }
  Panel out = a;
  out.values += b.values;
  return out;
}

IngestReport merge_reports(const IngestReport& a, const IngestReport& b) {
  return {a.read + b.read, a.kept + b.kept, a.outside_window + b.outside_window, a.unknown_cell + b.unknown_cell,
          a.bad_timestamp + b.bad_timestamp};
}

std::vector<double> default_daily_profile(int slots_per_day) {
  std::vector<double> profile(static_cast<std::size_t>(slots_per_day));
  double total = 0.0;
  for (int s = 0; s < slots_per_day; ++s) {
    const double x = (s + 0.5) / slots_per_day;
    // lunch and dinner peaks over a low base
    const double v = 0.25 + std::exp(-std::pow((x - 0.30) / 0.08, 2)) + 1.4 * std::exp(-std::pow((x - 0.70) / 0.10, 2));
    profile[static_cast<std::size_t>(s)] = v;
    total += v;
  }
  for (auto& v : profile) v *= slots_per_day / total;
  return profile;
}

Panel generate_synthetic(const SyntheticConfig& config) {
  const int m = config.grid.slots_per_day;
  if (static_cast<int>(config.daily_profile.size()) != m) {
    throw std::invalid_argument("generate_synthetic: profile length " + std::to_string(config.daily_profile.size()) +
                                " != slots per day " + std::to_string(m));
  }
  if (config.weekly_multipliers.size() != 7) throw std::invalid_argument("generate_synthetic: need 7 weekly multipliers");
  if (config.days <= 0) throw std::invalid_argument("generate_synthetic: days must be positive");
  if (config.base_means.size() != 1 && config.base_means.size() != config.nodes.size()) {
    throw std::invalid_argument("generate_synthetic: base_means must have 1 or one-per-node entries");
  }
  if (config.shift) {
    if (!std::isfinite(config.shift->multiplier) || config.shift->multiplier < 0.0) {
      throw std::invalid_argument("generate_synthetic: shift multiplier must be finite and >= 0");
    }
    if (config.shift->shift_day < 0 || config.shift->shift_day >= config.days) {
      throw std::invalid_argument("generate_synthetic: shift date outside the panel");
    }
  }

  Panel panel;
  panel.nodes = config.nodes;
  panel.start_day = config.start_day;
  panel.grid = config.grid;
  panel.values = CountMatrix::Zero(static_cast<Eigen::Index>(config.nodes.size()),
                                   static_cast<Eigen::Index>(config.days) * m);
  const unsigned first_weekday = std::chrono::weekday{config.start_day}.iso_encoding() - 1;
  for (std::size_t i = 0; i < config.nodes.size(); ++i) {
    const double base = config.base_means.size() == 1 ? config.base_means[0] : config.base_means[i];
    const bool shifted =
        config.shift && std::find(config.shift->nodes.begin(), config.shift->nodes.end(), config.nodes[i]) !=
                            config.shift->nodes.end();
    std::mt19937_64 rng(derive_seed(config.seed, {i}));
    for (int d = 0; d < config.days; ++d) {
      double level = base * config.weekly_multipliers[(first_weekday + static_cast<unsigned>(d)) % 7];
      if (shifted && d >= config.shift->shift_day) level *= config.shift->multiplier;
      for (int s = 0; s < m; ++s) {
        const double mean = level * config.daily_profile[static_cast<std::size_t>(s)];
        std::int64_t v = 0;
        if (config.noise == NoiseLaw::kNone) {
          v = static_cast<std::int64_t>(round_nonnegative(mean));
        } else if (mean > 0.0) {
          std::poisson_distribution<std::int64_t> draw(mean);
          v = draw(rng);
        }
        panel.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d) * m + s) = std::max<std::int64_t>(0, v);
      }
    }
  }
  return panel;
}

Panel window_slice(const Panel& panel, int start_day, int length_days) {
  if (start_day < 0 || length_days < 0 || start_day + length_days > panel.days()) {
    throw std::out_of_range("window_slice: days [" + std::to_string(start_day) + ", " +
                            std::to_string(start_day + length_days) + ") outside panel of " +
                            std::to_string(panel.days()) + " days");
  }
  Panel out;
  out.nodes = panel.nodes;
  out.grid = panel.grid;
  out.start_day = panel.start_day + std::chrono::days(start_day);
  const int m = panel.grid.slots_per_day;
  out.values = panel.values.middleCols(static_cast<Eigen::Index>(start_day) * m, static_cast<Eigen::Index>(length_days) * m);
  return out;
}

std::vector<TripRecord> panel_to_trips(const Panel& panel) {
  std::vector<TripRecord> out;
  for (std::size_t t = 0; t < panel.slot_count(); ++t) {
    const int minutes = panel.grid.day_start_minutes +
                        static_cast<int>(t % static_cast<std::size_t>(panel.grid.slots_per_day)) * panel.grid.slot_minutes;
    const int mid = minutes * 60 + panel.grid.slot_minutes * 30;  // seconds
    const auto day = panel.start_day + std::chrono::days(static_cast<int>(t / static_cast<std::size_t>(panel.grid.slots_per_day)));
    const std::string stamp = format_date(day) + " " + two(mid / 3600) + ":" + two((mid / 60) % 60) + ":" + two(mid % 60);
    for (std::size_t i = 0; i < panel.nodes.size(); ++i) {
      for (std::int64_t c = 0; c < panel.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)); ++c) {
        out.push_back({stamp, panel.nodes[i]});
      }
    }
  }
  return out;
}

}  // namespace ctrecon
