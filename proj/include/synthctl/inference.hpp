#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "synthctl/scm_engine.hpp"

namespace synthctl {

inline constexpr double kPreRmseFloor = 1e-12;

/// Root mean squared gap over the inclusive, zero-based day window [t1, t2].
double rmse_window(std::span<const double> actual, std::span<const double> synthetic, int t1, int t2);

/// R_post / R_pre. Throws ZeroPreRmse when R_pre <= 0.
double post_pre_ratio(double rmse_post, double rmse_pre);

struct PlaceboEntry {
  UnitId unit;
  double r = 0.0;
  double rmse_pre = 0.0;
  double rmse_post = 0.0;
  int pre_length = 0;
  bool pre_floored = false;  // R_pre was below kPreRmseFloor
  bool skipped = false;
  std::string skip_reason;
};

/// Entries sorted by unit id; `treated_index` locates the truly treated unit.
struct PlaceboEnsemble {
  UnitId treated;
  std::vector<PlaceboEntry> entries;
  std::size_t treated_index = 0;

  const PlaceboEntry& treated_entry() const { return entries[treated_index]; }
};

struct PlaceboOptions {
  int parallelism = 1;
  std::optional<int> placebo_pre_length;  // overrides the treated unit's T0 for placebos
};

/// R_pre over [0, T0), R_post over [T0, T) and their ratio, flooring R_pre.
PlaceboEntry entry_from_fit(const SynthResult& fit);

/// Refits with every donor as pseudo-treated against the remaining donors (the
/// treated unit never enters a placebo pool). Failed placebo fits are kept as
/// skipped entries.
PlaceboEnsemble placebo_run(const StudySpec& spec, const Panel& panel, const PredictorTable& predictors,
                            const PlaceboOptions& opts = {});

/// Share of non-skipped entries whose r strictly exceeds the treated unit's r.
double p_value(const PlaceboEnsemble& ensemble);

/// Same rule on a bare list of ratios.
double p_value(std::span<const double> r, std::size_t treated_index);

struct SweepRow {
  int t_fit = 0;
  double pre_deviation = 0.0;  // squared gap summed over [0, T0)
  double p_value = 0.0;
  bool failed = false;
  std::string error;
};

std::vector<SweepRow> training_sweep(const StudySpec& spec_template, std::span<const int> t_fits, const Panel& panel,
                                     const PredictorTable& predictors, const PlaceboOptions& opts = {});

}  // namespace synthctl
