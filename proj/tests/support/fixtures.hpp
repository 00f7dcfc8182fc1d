#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "synthctl/panel_store.hpp"
#include "synthctl/types.hpp"

namespace fixtures {

inline synthctl::Date day0() { return synthctl::Date::parse("2021-02-19"); }

// Panel from per-unit rows of equal length.
inline synthctl::Panel make_panel(const std::vector<std::string>& codes, const std::vector<std::vector<double>>& rows) {
  std::vector<double> values;
  for (const auto& r : rows) values.insert(values.end(), r.begin(), r.end());
  return synthctl::Panel(synthctl::to_unit_ids(codes), day0(), rows.empty() ? 0 : static_cast<int>(rows[0].size()),
                         std::move(values));
}

inline synthctl::KeyedTable make_table(const std::vector<std::string>& columns, const std::vector<std::string>& codes,
                                       const std::vector<std::vector<double>>& rows) {
  synthctl::KeyedTable t;
  t.columns = columns;
  t.units = synthctl::to_unit_ids(codes);
  t.rows = rows;
  return t;
}

inline std::vector<std::string> codes(const std::string& prefix, int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

// Smooth vaccination-like curve: a logistic in time plus a unit-specific wiggle.
inline std::vector<double> curve(int days, double K, double nu, double p0, double wiggle_amp, double phase) {
  std::vector<double> y(days);
  for (int t = 0; t < days; ++t) {
    y[t] = K * p0 / (p0 + (K - p0) * std::exp(-nu * t)) + wiggle_amp * std::sin(0.15 * t + phase);
  }
  return y;
}

}  // namespace fixtures
