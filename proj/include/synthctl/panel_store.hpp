#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "synthctl/types.hpp"

namespace synthctl {

struct UnitMeta {
  bool treated = false;
  std::optional<Date> t0;
  std::optional<std::string> cluster;
  std::optional<int> incentive_category;  // 0..3
};

using MetadataTable = std::map<UnitId, UnitMeta>;

/// Outcome matrix (units x days) on a dense daily grid. Missing cells are NaN.
/// Values are percent of population (0-100) or raw cumulative counts.
class Panel {
 public:
  Panel() = default;
  Panel(std::vector<UnitId> units, Date first_date, int num_days, std::vector<double> values);

  std::size_t num_units() const { return units_.size(); }
  int num_days() const { return num_days_; }
  const std::vector<UnitId>& units() const { return units_; }
  Date first_date() const { return first_date_; }
  Date date_at(int day) const { return first_date_ + day; }
  // Day index of a date; nullopt outside the grid.
  std::optional<int> day_index(const Date& d) const;

  std::optional<std::size_t> find(const UnitId& id) const;
  std::size_t index_of(const UnitId& id) const;  // throws UnknownUnit

  std::span<const double> row(std::size_t unit) const;
  std::span<const double> row(const UnitId& id) const { return row(index_of(id)); }
  double at(std::size_t unit, int day) const { return values_[unit * num_days_ + day]; }

  const UnitMeta& meta(std::size_t unit) const { return meta_[unit]; }
  const UnitMeta& meta(const UnitId& id) const { return meta_[index_of(id)]; }

  // Copy of this panel with metadata attached; units absent from the table keep defaults.
  // Throws InvalidArgument if a treated unit's t0 lies outside the date range.
  Panel with_metadata(const MetadataTable& table) const;
  Panel with_rows(std::vector<UnitId> units, std::vector<double> values) const;
  Panel restricted_to(std::span<const UnitId> keep) const;

 private:
  std::vector<UnitId> units_;
  Date first_date_{};
  int num_days_ = 0;
  std::vector<double> values_;
  std::vector<UnitMeta> meta_;
  std::map<UnitId, std::size_t> index_;
};

struct LongSchema {
  std::string unit = "unit";
  std::string date = "date";
  std::string value = "value";
};

Panel ingest_panel(std::istream& in, const LongSchema& schema = {}, const std::string& source = "<stream>");
Panel ingest_panel(const std::filesystem::path& path, const LongSchema& schema = {});

void write_panel(std::ostream& out, const Panel& panel);

/// Per-unit rows of named numeric columns (predictor tables, CCVI indices, ...).
struct KeyedTable {
  std::vector<std::string> columns;
  std::vector<UnitId> units;
  std::vector<std::vector<double>> rows;  // rows[i] aligned with columns

  std::optional<std::size_t> find(const UnitId& id) const;
  const std::vector<double>& row(const UnitId& id) const;  // throws UnknownUnit
  std::optional<std::size_t> column_index(std::string_view name) const;
  KeyedTable select_columns(std::span<const std::string> names) const;
};

using PredictorTable = KeyedTable;

KeyedTable read_keyed_table(std::istream& in, const std::string& source = "<stream>");
KeyedTable read_keyed_table(const std::filesystem::path& path);

MetadataTable read_metadata(std::istream& in, const std::string& source = "<stream>");
MetadataTable read_metadata(const std::filesystem::path& path);

struct JoinResult {
  KeyedTable joined;
  std::vector<UnitId> dropped;  // sorted
};

/// Inner join on the unit key. Columns are concatenated in table order; the
/// joined units follow the first table's order.
JoinResult join_on_key(std::span<const KeyedTable> tables);

std::vector<UnitId> common_units(const Panel& panel, std::span<const KeyedTable> tables);

enum class RepairMode { interpolate, cumulative_max, both };

struct CleaningPolicy {
  double max_bad_fraction = 0.10;
  int window = 7;  // trailing window
  RepairMode repair = RepairMode::interpolate;
};

struct CleanOutcome {
  bool dropped = false;
  double bad_fraction = 0.0;
  Series values;  // empty when dropped
};

// Fraction of missing-or-zero cells from the first positive value onwards.
double bad_fraction(std::span<const double> series);

// Fills NaN cells by linear interpolation between the nearest valid neighbours;
// edges take the nearest valid value. Throws AllMissing if nothing is valid.
Series interpolate_missing(std::span<const double> series);

// Trailing mean over `window` days; the first days average the available prefix.
Series rolling_mean(std::span<const double> series, int window);

Series enforce_monotone(std::span<const double> series);

// Repair step only (bad cells marked missing, then filled per policy.repair).
Series repair_series(std::span<const double> series, RepairMode mode);

CleanOutcome clean_series(std::span<const double> series, const CleaningPolicy& policy = {});

struct CleanPanelReport {
  std::vector<UnitId> dropped;
  std::vector<double> dropped_bad_fraction;
};

Panel clean_panel(const Panel& panel, const CleaningPolicy& policy, CleanPanelReport* report = nullptr);

enum class VaxScheme { first_dose, complete };

/// Raw cumulative counts for the 12+, 18+ and 65+ bands with their census populations.
struct AgeBandCounts {
  static constexpr std::array<int, 3> kBands{12, 18, 65};

  std::array<Series, 3> first_dose;
  std::array<Series, 3> complete;
  std::array<double, 3> population{};
};

/// Vaccination rate (percent) for ages [lb, ub), or lb+ when ub is empty.
/// Each band is repaired (interpolation then running max) before subtraction.
Series age_band_rate(const AgeBandCounts& raw, int lb, std::optional<int> ub, VaxScheme scheme);

}  // namespace synthctl
