#include "synthctl/panel_store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <set>

#include <fmt/format.h>

#include "synthctl/csv.hpp"
#include "synthctl/error.hpp"

namespace synthctl {

Panel::Panel(std::vector<UnitId> units, Date first_date, int num_days, std::vector<double> values)
    : units_(std::move(units)), first_date_(first_date), num_days_(num_days), values_(std::move(values)) {
  if (num_days_ < 0 || values_.size() != units_.size() * static_cast<std::size_t>(num_days_)) {
    throw Error(ErrorCode::DimensionMismatch,
                fmt::format("panel values hold {} cells, expected {} units x {} days", values_.size(),
                            units_.size(), num_days_));
  }
  meta_.resize(units_.size());
  for (std::size_t i = 0; i < units_.size(); ++i) {
    if (!index_.emplace(units_[i], i).second) {
      throw Error(ErrorCode::DuplicateCell, fmt::format("unit '{}' appears twice", units_[i].code()));
    }
  }
}

std::optional<int> Panel::day_index(const Date& d) const {
  int idx = d - first_date_;
  if (idx < 0 || idx >= num_days_) return std::nullopt;
  return idx;
}

std::optional<std::size_t> Panel::find(const UnitId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Panel::index_of(const UnitId& id) const {
  auto idx = find(id);
  if (!idx) throw Error(ErrorCode::UnknownUnit, fmt::format("unit '{}' is not in the panel", id.code()));
  return *idx;
}

std::span<const double> Panel::row(std::size_t unit) const {
  return std::span<const double>(values_).subspan(unit * num_days_, num_days_);
}

Panel Panel::with_metadata(const MetadataTable& table) const {
  Panel out = *this;
  for (std::size_t i = 0; i < units_.size(); ++i) {
    auto it = table.find(units_[i]);
    if (it == table.end()) continue;
    const UnitMeta& m = it->second;
    if (m.treated) {
      if (!m.t0) {
        throw Error(ErrorCode::InvalidArgument,
                    fmt::format("treated unit '{}' has no t0", units_[i].code()));
      }
      if (!day_index(*m.t0)) {
        throw Error(ErrorCode::InvalidArgument,
                    fmt::format("t0 {} of unit '{}' is outside {}..{}", m.t0->to_string(),
                                units_[i].code(), first_date_.to_string(),
                                date_at(num_days_ - 1).to_string()));
      }
    }
    out.meta_[i] = m;
  }
  return out;
}

Panel Panel::with_rows(std::vector<UnitId> units, std::vector<double> values) const {
  Panel out(std::move(units), first_date_, num_days_, std::move(values));
  for (std::size_t i = 0; i < out.units_.size(); ++i) {
    if (auto j = find(out.units_[i])) out.meta_[i] = meta_[*j];
  }
  return out;
}

Panel Panel::restricted_to(std::span<const UnitId> keep) const {
  std::vector<UnitId> units;
  std::vector<double> values;
  for (const auto& id : keep) {
    auto r = row(index_of(id));
    units.push_back(id);
    values.insert(values.end(), r.begin(), r.end());
  }
  return with_rows(std::move(units), std::move(values));
}

Panel ingest_panel(std::istream& in, const LongSchema& schema, const std::string& source) {
  csv::Table t = csv::read(in, source);
  if (t.rows.empty()) throw Error(ErrorCode::EmptyFile, fmt::format("{}: no data rows", source));
  const std::size_t cu = t.column(schema.unit);
  const std::size_t cd = t.column(schema.date);
  const std::size_t cv = t.column(schema.value);

  struct Cell {
    std::size_t unit;
    Date date;
    double value;
  };
  std::vector<UnitId> units;
  std::map<UnitId, std::size_t> unit_index;
  std::vector<Cell> cells;
  cells.reserve(t.rows.size());
  Date lo = Date::parse(t.rows.front()[cd]);
  Date hi = lo;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    UnitId id(row[cu]);
    auto [it, inserted] = unit_index.emplace(id, units.size());
    if (inserted) units.push_back(id);
    Date d = Date::parse(row[cd]);
    lo = std::min(lo, d);
    hi = std::max(hi, d);
    cells.push_back({it->second, d, csv::parse_double(row[cv], fmt::format("{}:{}", source, r + 2))});
  }

  const int days = (hi - lo) + 1;
  std::vector<double> values(units.size() * days, kMissing);
  std::vector<bool> seen(values.size(), false);
  for (const auto& c : cells) {
    std::size_t k = c.unit * days + (c.date - lo);
    if (seen[k]) {
      throw Error(ErrorCode::DuplicateCell, fmt::format("{}: unit '{}' has two rows for {}", source,
                                                        units[c.unit].code(), c.date.to_string()));
    }
    seen[k] = true;
    values[k] = c.value;
  }
  return Panel(std::move(units), lo, days, std::move(values));
}

Panel ingest_panel(const std::filesystem::path& path, const LongSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, fmt::format("cannot open '{}'", path.string()));
  return ingest_panel(in, schema, path.string());
}

void write_panel(std::ostream& out, const Panel& panel) {
  csv::Writer w(out);
  w.row({"unit", "date", "value"});
  for (std::size_t u = 0; u < panel.num_units(); ++u) {
    for (int d = 0; d < panel.num_days(); ++d) {
      w.row({panel.units()[u].code(), panel.date_at(d).to_string(), csv::format_double(panel.at(u, d))});
    }
  }
}

std::optional<std::size_t> KeyedTable::find(const UnitId& id) const {
  auto it = std::find(units.begin(), units.end(), id);
  if (it == units.end()) return std::nullopt;
  return static_cast<std::size_t>(it - units.begin());
}

const std::vector<double>& KeyedTable::row(const UnitId& id) const {
  auto idx = find(id);
  if (!idx) throw Error(ErrorCode::UnknownUnit, fmt::format("unit '{}' is not in the table", id.code()));
  return rows[*idx];
}

std::optional<std::size_t> KeyedTable::column_index(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return i;
  }
  return std::nullopt;
}

KeyedTable KeyedTable::select_columns(std::span<const std::string> names) const {
  std::vector<std::size_t> idx;
  for (const auto& n : names) {
    auto c = column_index(n);
    if (!c) throw Error(ErrorCode::InvalidArgument, fmt::format("no column named '{}'", n));
    idx.push_back(*c);
  }
  KeyedTable out;
  out.columns.assign(names.begin(), names.end());
  out.units = units;
  for (const auto& r : rows) {
    std::vector<double> nr;
    for (auto c : idx) nr.push_back(r[c]);
    out.rows.push_back(std::move(nr));
  }
  return out;
}

KeyedTable read_keyed_table(std::istream& in, const std::string& source) {
  csv::Table t = csv::read(in, source);
  if (t.header.empty() || t.header.front() != "unit") {
    throw Error(ErrorCode::MalformedCsv, fmt::format("{}: first column must be 'unit'", source));
  }
  KeyedTable out;
  out.columns.assign(t.header.begin() + 1, t.header.end());
  std::set<UnitId> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    UnitId id(t.rows[r][0]);
    if (!seen.insert(id).second) {
      throw Error(ErrorCode::DuplicateCell, fmt::format("{}: unit '{}' appears twice", source, id.code()));
    }
    std::vector<double> row;
    for (std::size_t c = 1; c < t.header.size(); ++c) {
      row.push_back(csv::parse_double(t.rows[r][c], fmt::format("{}:{}", source, r + 2)));
    }
    out.units.push_back(std::move(id));
    out.rows.push_back(std::move(row));
  }
  return out;
}

KeyedTable read_keyed_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, fmt::format("cannot open '{}'", path.string()));
  return read_keyed_table(in, path.string());
}

namespace {

bool parse_flag(const std::string& s, const std::string& context) {
  std::string v;
  for (char c : s) v.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (v.empty() || v == "0" || v == "false" || v == "no") return false;
  if (v == "1" || v == "true" || v == "yes") return true;
  throw Error(ErrorCode::MalformedCsv, fmt::format("{}: '{}' is not a boolean", context, s));
}

}  // namespace

MetadataTable read_metadata(std::istream& in, const std::string& source) {
  csv::Table t = csv::read(in, source);
  const std::size_t cu = t.column("unit");
  const std::size_t ct = t.column("treated");
  const std::size_t c0 = t.column("t0");
  const std::size_t cc = t.column("cluster");
  const std::size_t ci = t.column("incentive_category");
  MetadataTable out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string ctx = fmt::format("{}:{}", source, r + 2);
    UnitMeta m;
    m.treated = parse_flag(row[ct], ctx);
    if (!row[c0].empty()) m.t0 = Date::parse(row[c0]);
    if (!row[cc].empty()) m.cluster = row[cc];
    if (!row[ci].empty()) {
      double cat = csv::parse_double(row[ci], ctx);
      if (cat != 0 && cat != 1 && cat != 2 && cat != 3) {
        throw Error(ErrorCode::MalformedCsv, fmt::format("{}: incentive_category must be 0..3", ctx));
      }
      m.incentive_category = static_cast<int>(cat);
    }
    if (!out.emplace(UnitId(row[cu]), m).second) {
      throw Error(ErrorCode::DuplicateCell, fmt::format("{}: unit '{}' appears twice", ctx, row[cu]));
    }
  }
  return out;
}

MetadataTable read_metadata(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, fmt::format("cannot open '{}'", path.string()));
  return read_metadata(in, path.string());
}

JoinResult join_on_key(std::span<const KeyedTable> tables) {
  if (tables.empty()) throw Error(ErrorCode::InvalidArgument, "join_on_key needs at least one table");
  std::set<UnitId> all;
  for (const auto& t : tables) all.insert(t.units.begin(), t.units.end());

  JoinResult out;
  for (const auto& t : tables) out.joined.columns.insert(out.joined.columns.end(), t.columns.begin(), t.columns.end());
  for (const auto& id : tables.front().units) {
    std::vector<double> row;
    bool everywhere = true;
    for (const auto& t : tables) {
      auto idx = t.find(id);
      if (!idx) {
        everywhere = false;
        break;
      }
      row.insert(row.end(), t.rows[*idx].begin(), t.rows[*idx].end());
    }
    if (everywhere) {
      out.joined.units.push_back(id);
      out.joined.rows.push_back(std::move(row));
    }
  }
  if (out.joined.units.empty()) throw Error(ErrorCode::EmptyIntersection, "no unit is present in every table");
  std::set<UnitId> kept(out.joined.units.begin(), out.joined.units.end());
  for (const auto& id : all) {
    if (!kept.count(id)) out.dropped.push_back(id);
  }
  return out;
}

std::vector<UnitId> common_units(const Panel& panel, std::span<const KeyedTable> tables) {
  std::vector<UnitId> out;
  for (const auto& id : panel.units()) {
    bool everywhere = std::all_of(tables.begin(), tables.end(), [&](const KeyedTable& t) { return t.find(id).has_value(); });
    if (everywhere) out.push_back(id);
  }
  if (out.empty()) throw Error(ErrorCode::EmptyIntersection, "no panel unit is present in every table");
  return out;
}

namespace {

// Missing cells and zeros after the first positive value are both treated as bad.
std::vector<double> mark_bad(std::span<const double> series) {
  std::vector<double> out(series.begin(), series.end());
  bool started = false;
  for (double& v : out) {
    if (started && v == 0.0) v = kMissing;
    if (v > 0.0) started = true;
  }
  return out;
}

}  // namespace

double bad_fraction(std::span<const double> series) {
  std::size_t first = series.size();
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series[i] > 0.0) {
      first = i;
      break;
    }
  }
  if (first == series.size()) return 0.0;
  std::size_t bad = 0;
  for (std::size_t i = first; i < series.size(); ++i) {
    if (std::isnan(series[i]) || series[i] == 0.0) ++bad;
  }
  return static_cast<double>(bad) / static_cast<double>(series.size() - first);
}

Series interpolate_missing(std::span<const double> series) {
  Series out(series.begin(), series.end());
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!std::isnan(out[i])) valid.push_back(i);
  }
  if (valid.empty()) throw Error(ErrorCode::AllMissing, "series has no valid cell");
  for (std::size_t i = 0; i < valid.front(); ++i) out[i] = out[valid.front()];
  for (std::size_t i = valid.back() + 1; i < out.size(); ++i) out[i] = out[valid.back()];
  for (std::size_t k = 0; k + 1 < valid.size(); ++k) {
    std::size_t a = valid[k], b = valid[k + 1];
    if (b == a + 1) continue;
    const double ya = out[a], yb = out[b];
    const double span = static_cast<double>(b - a);
    for (std::size_t i = a + 1; i < b; ++i) {
      const double s = static_cast<double>(i - a) / span;
      out[i] = ya + s * (yb - ya);
    }
  }
  return out;
}

Series rolling_mean(std::span<const double> series, int window) {
  if (window < 1) throw Error(ErrorCode::InvalidArgument, "rolling window must be >= 1");
  Series out(series.size());
  for (std::size_t t = 0; t < series.size(); ++t) {
    const std::size_t lo = t + 1 >= static_cast<std::size_t>(window) ? t + 1 - window : 0;
    double sum = 0.0;
    for (std::size_t i = lo; i <= t; ++i) sum += series[i];
    out[t] = sum / static_cast<double>(t - lo + 1);
  }
  return out;
}

Series enforce_monotone(std::span<const double> series) {
  Series out(series.begin(), series.end());
  double running = -std::numeric_limits<double>::infinity();
  for (double& v : out) {
    if (std::isnan(v)) {
      if (running > -std::numeric_limits<double>::infinity()) v = running;
      continue;
    }
    running = std::max(running, v);
    v = running;
  }
  return out;
}

Series repair_series(std::span<const double> series, RepairMode mode) {
  Series marked = mark_bad(series);
  switch (mode) {
    case RepairMode::interpolate:
      return interpolate_missing(marked);
    case RepairMode::cumulative_max: {
      Series out = enforce_monotone(marked);
      return interpolate_missing(out);  // only leading gaps remain
    }
    case RepairMode::both:
      return enforce_monotone(interpolate_missing(marked));
  }
  return marked;
}

CleanOutcome clean_series(std::span<const double> series, const CleaningPolicy& policy) {
  if (policy.max_bad_fraction < 0.0 || policy.max_bad_fraction > 1.0) {
    throw Error(ErrorCode::InvalidArgument, "max_bad_fraction must lie in [0, 1]");
  }
  if (std::all_of(series.begin(), series.end(), [](double v) { return std::isnan(v); })) {
    throw Error(ErrorCode::AllMissing, "series has no valid cell");
  }
  CleanOutcome out;
  out.bad_fraction = bad_fraction(series);
  if (out.bad_fraction > policy.max_bad_fraction) {
    out.dropped = true;
    return out;
  }
  out.values = rolling_mean(repair_series(series, policy.repair), policy.window);
  return out;
}

Panel clean_panel(const Panel& panel, const CleaningPolicy& policy, CleanPanelReport* report) {
  std::vector<UnitId> units;
  std::vector<double> values;
  for (std::size_t u = 0; u < panel.num_units(); ++u) {
    CleanOutcome c;
    try {
      c = clean_series(panel.row(u), policy);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::AllMissing) throw;
      c.dropped = true;
      c.bad_fraction = 1.0;
    }
    if (c.dropped) {
      if (report) {
        report->dropped.push_back(panel.units()[u]);
        report->dropped_bad_fraction.push_back(c.bad_fraction);
      }
      continue;
    }
    units.push_back(panel.units()[u]);
    values.insert(values.end(), c.values.begin(), c.values.end());
  }
  return panel.with_rows(std::move(units), std::move(values));
}

namespace {

std::size_t band_slot(int age) {
  for (std::size_t i = 0; i < AgeBandCounts::kBands.size(); ++i) {
    if (AgeBandCounts::kBands[i] == age) return i;
  }
  throw Error(ErrorCode::InvalidArgument, fmt::format("no age band starts at {}", age));
}

}  // namespace

Series age_band_rate(const AgeBandCounts& raw, int lb, std::optional<int> ub, VaxScheme scheme) {
  const std::size_t lo = band_slot(lb);
  if (ub && *ub <= lb) throw Error(ErrorCode::InvalidArgument, "upper age bound must exceed the lower one");
  const auto& counts = scheme == VaxScheme::first_dose ? raw.first_dose : raw.complete;

  auto population = [&](std::size_t slot) {
    double p = raw.population[slot];
    if (!(p > 0.0)) {
      throw Error(ErrorCode::NonPositivePopulation,
                  fmt::format("population of band {}+ is {}", AgeBandCounts::kBands[slot], p));
    }
    return p;
  };

  const Series lower = repair_series(counts[lo], RepairMode::both);
  double pop = population(lo);
  Series rate(lower.size());
  if (!ub) {
    for (std::size_t t = 0; t < lower.size(); ++t) rate[t] = 100.0 * lower[t] / pop;
    return rate;
  }

  const std::size_t hi = band_slot(*ub);
  const Series upper = repair_series(counts[hi], RepairMode::both);
  if (upper.size() != lower.size()) {
    throw Error(ErrorCode::DimensionMismatch, "age band series differ in length");
  }
  pop -= population(hi);
  if (!(pop > 0.0)) {
    throw Error(ErrorCode::NonPositivePopulation, fmt::format("population of band {}-{} is {}", lb, *ub, pop));
  }
  for (std::size_t t = 0; t < lower.size(); ++t) {
    const double count = lower[t] - upper[t];
    if (count < 0.0) {
      throw Error(ErrorCode::NegativeDerivedCount,
                  fmt::format("band {}-{} count is {} at day {}", lb, *ub, count, t));
    }
    rate[t] = 100.0 * count / pop;
  }
  return rate;
}

}  // namespace synthctl
