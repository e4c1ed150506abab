#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctrecon/hierarchy.hpp"

namespace ctrecon {

using Day = std::chrono::sys_days;

/// "YYYY-MM-DD" <-> sys_days.
Day parse_date(const std::string& text);
std::string format_date(Day day);

/// Regular grid of base-period slots: `slots_per_day` slots of `slot_minutes`
/// starting at `day_start_minutes` after midnight.
struct SlotGrid {
  int slots_per_day = 48;
  int slot_minutes = 30;
  int day_start_minutes = 0;

  /// Slot index within the day for a time of day, or nullopt if outside the window.
  std::optional<int> slot_of(double minutes_after_midnight) const;
  bool operator==(const SlotGrid&) const = default;
};

/// Balanced bottom-level panel of non-negative integer counts.
struct Panel {
  std::vector<std::string> nodes;
  Day start_day{};
  SlotGrid grid;
  CountMatrix values;  // nodes x (days * slots_per_day)

  int slots_per_day() const { return grid.slots_per_day; }
  std::size_t slot_count() const { return static_cast<std::size_t>(values.cols()); }
  int days() const { return static_cast<int>(values.cols() / grid.slots_per_day); }
  std::string timestamp(std::size_t slot) const;

  /// Stable content hash (ids, grid, dates and values).
  std::uint64_t content_hash() const;
  /// Rows reordered to match `order` (every id must exist).
  Panel reorder(const std::vector<std::string>& order) const;
  /// Throws unless the balanced-panel invariants hold.
  void check() const;

  std::string to_csv() const;
  void save_csv(const std::filesystem::path& path) const;
  static Panel parse_csv(const std::string& text);
  static Panel load_csv(const std::filesystem::path& path);
};

struct TripRecord {
  std::string started_at;
  std::string key;  // cell id, or station id when a station map is applied
};

struct IngestScheme {
  SlotGrid grid;
  std::optional<Day> start_day;  // defaults to the first kept record's day
  std::optional<int> days;       // defaults to span through the last kept record
};

struct IngestReport {
  std::size_t read = 0;
  std::size_t kept = 0;
  std::size_t outside_window = 0;  // time of day or date outside the panel
  std::size_t unknown_cell = 0;
  std::size_t bad_timestamp = 0;

  std::size_t dropped() const { return outside_window + unknown_cell + bad_timestamp; }
};

struct IngestResult {
  Panel panel;
  IngestReport report;
};

/// Maps a record key to a cell id. For direct cell ids use an identity map.
using CellMap = std::map<std::string, std::string>;

CellMap identity_cell_map(const std::vector<std::string>& cells);
CellMap load_cell_map(const std::filesystem::path& path);  // station_id,cell_id

/// Seconds-resolution timestamp parsed from ISO-8601 ("2023-01-01 07:03:22.1").
struct Timestamp {
  Day day;
  double minutes;  // minutes after midnight
};
std::optional<Timestamp> parse_timestamp(const std::string& text);

std::vector<TripRecord> read_trip_csv(const std::filesystem::path& path, bool use_station_column = false);

IngestResult ingest_trips(std::span<const TripRecord> records, const CellMap& cell_map, const IngestScheme& scheme);

/// Elementwise sum of shard panels over the same grid and node set.
Panel merge_panels(const Panel& a, const Panel& b);
IngestReport merge_reports(const IngestReport& a, const IngestReport& b);

struct ShiftSpec {
  std::vector<std::string> nodes;
  int shift_day = 0;  // day index (from panel start) of the first shifted day
  double multiplier = 1.0;
};

enum class NoiseLaw { kPoisson, kNone };

struct SyntheticConfig {
  std::vector<std::string> nodes;
  std::vector<double> base_means;  // one per node, or a single value for all
  Day start_day = parse_date("2023-01-02");
  int days = 0;
  SlotGrid grid;
  std::vector<double> daily_profile;  // length slots_per_day
  std::vector<double> weekly_multipliers = std::vector<double>(7, 1.0);  // Monday first
  NoiseLaw noise = NoiseLaw::kPoisson;
  std::optional<ShiftSpec> shift;
  std::uint64_t seed = 1;
};

Panel generate_synthetic(const SyntheticConfig& config);

/// A smooth bimodal intra-day profile with mean 1, handy for demand-like panels.
std::vector<double> default_daily_profile(int slots_per_day);

Panel window_slice(const Panel& panel, int start_day, int length_days);

/// Renders a panel as trip records, one per unit of demand, at slot midpoints.
std::vector<TripRecord> panel_to_trips(const Panel& panel);

}  // namespace ctrecon
