#include "synthctl/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "synthctl/error.hpp"
#include "synthctl/parallel.hpp"

namespace synthctl {

double rmse_window(std::span<const double> actual, std::span<const double> synthetic, int t1, int t2) {
  if (t2 < t1) throw Error(ErrorCode::EmptyWindow, fmt::format("window [{}, {}] is empty", t1, t2));
  if (t1 < 0 || static_cast<std::size_t>(t2) >= actual.size() || static_cast<std::size_t>(t2) >= synthetic.size()) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("window [{}, {}] exceeds the series", t1, t2));
  }
  double s = 0.0;
  for (int t = t1; t <= t2; ++t) {
    const double e = actual[t] - synthetic[t];
    s += e * e;
  }
  return std::sqrt(s / static_cast<double>(t2 - t1 + 1));
}

double post_pre_ratio(double rmse_post, double rmse_pre) {
  if (!(rmse_pre > 0.0)) throw Error(ErrorCode::ZeroPreRmse, "pre-period RMSE is zero");
  return rmse_post / rmse_pre;
}

PlaceboEntry entry_from_fit(const SynthResult& fit) {
  const int total = static_cast<int>(fit.actual.size());
  if (fit.pre_length >= total) throw Error(ErrorCode::EmptyWindow, "no post-intervention days");
  PlaceboEntry e;
  e.unit = fit.treated;
  e.pre_length = fit.pre_length;
  e.rmse_pre = rmse_window(fit.actual, fit.synthetic, 0, fit.pre_length - 1);
  e.rmse_post = rmse_window(fit.actual, fit.synthetic, fit.pre_length, total - 1);
  double pre = e.rmse_pre;
  if (pre < kPreRmseFloor) {
    pre = kPreRmseFloor;
    e.pre_floored = true;
  }
  e.r = post_pre_ratio(e.rmse_post, pre);
  return e;
}

namespace {

PlaceboEnsemble run_ensemble(const StudySpec& spec, const Panel& panel, const PredictorTable& predictors,
                             const PlaceboOptions& opts, SynthResult* treated_fit) {
  if (spec.donors.size() < 2) throw Error(ErrorCode::TooFewUnits, "placebo inference needs at least two donors");
  spec.validate(panel);
  if (spec.pre_length >= panel.num_days()) throw Error(ErrorCode::EmptyWindow, "no post-intervention days");

  const std::size_t n = spec.donors.size() + 1;
  std::vector<PlaceboEntry> entries(n);
  std::vector<SynthResult> fits(1);
  parallel_for(n, opts.parallelism, [&](std::size_t i) {
    if (i == 0) {
      fits[0] = fit_synth(spec, panel, predictors);
      entries[0] = entry_from_fit(fits[0]);
      return;
    }
    StudySpec placebo = spec;
    placebo.treated = spec.donors[i - 1];
    placebo.donors.clear();
    for (const auto& d : spec.donors) {
      if (d != placebo.treated) placebo.donors.push_back(d);
    }
    if (opts.placebo_pre_length) placebo.pre_length = *opts.placebo_pre_length;
    try {
      entries[i] = entry_from_fit(fit_synth(placebo, panel, predictors));
    } catch (const Error& e) {
      entries[i] = PlaceboEntry{};
      entries[i].unit = placebo.treated;
      entries[i].pre_length = placebo.pre_length;
      entries[i].skipped = true;
      entries[i].skip_reason = e.what();
    }
  });

  PlaceboEnsemble out;
  out.treated = spec.treated;
  out.entries = std::move(entries);
  std::sort(out.entries.begin(), out.entries.end(),
            [](const PlaceboEntry& a, const PlaceboEntry& b) { return a.unit < b.unit; });
  for (std::size_t i = 0; i < out.entries.size(); ++i) {
    if (out.entries[i].unit == spec.treated) out.treated_index = i;
  }
  if (treated_fit) *treated_fit = std::move(fits[0]);
  return out;
}

}  // namespace

PlaceboEnsemble placebo_run(const StudySpec& spec, const Panel& panel, const PredictorTable& predictors,
                            const PlaceboOptions& opts) {
  return run_ensemble(spec, panel, predictors, opts, nullptr);
}

double p_value(const PlaceboEnsemble& ensemble) {
  if (ensemble.entries.empty() || ensemble.treated_index >= ensemble.entries.size()) {
    throw Error(ErrorCode::InvalidArgument, "ensemble has no treated entry");
  }
  const PlaceboEntry& treated = ensemble.treated_entry();
  if (treated.skipped) throw Error(ErrorCode::InvalidArgument, "treated fit is missing from the ensemble");
  std::size_t counted = 0, greater = 0;
  for (const auto& e : ensemble.entries) {
    if (e.skipped) continue;
    ++counted;
    if (e.r > treated.r) ++greater;
  }
  return static_cast<double>(greater) / static_cast<double>(counted);
}

double p_value(std::span<const double> r, std::size_t treated_index) {
  if (treated_index >= r.size()) throw Error(ErrorCode::InvalidArgument, "treated index out of range");
  const double r1 = r[treated_index];
  const auto greater = std::count_if(r.begin(), r.end(), [&](double x) { return x > r1; });
  return static_cast<double>(greater) / static_cast<double>(r.size());
}

std::vector<SweepRow> training_sweep(const StudySpec& spec_template, std::span<const int> t_fits, const Panel& panel,
                                     const PredictorTable& predictors, const PlaceboOptions& opts) {
  std::vector<int> sorted(t_fits.begin(), t_fits.end());
  std::sort(sorted.begin(), sorted.end());
  for (int t : sorted) {
    if (t >= spec_template.pre_length) {
      throw Error(ErrorCode::InvalidSplit, fmt::format("t_fit {} is not below T0 {}", t, spec_template.pre_length));
    }
  }
  std::vector<SweepRow> rows;
  for (int t : sorted) {
    SweepRow row;
    row.t_fit = t;
    StudySpec spec = spec_template;
    spec.t_fit = t;
    try {
      SynthResult fit;
      PlaceboEnsemble ens = run_ensemble(spec, panel, predictors, opts, &fit);
      row.pre_deviation = fit.pre_mspe;
      row.p_value = p_value(ens);
    } catch (const Error& e) {
      row.failed = true;
      row.error = e.what();
      row.pre_deviation = kMissing;
      row.p_value = kMissing;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace synthctl
