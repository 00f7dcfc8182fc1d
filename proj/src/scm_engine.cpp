#include "synthctl/scm_engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "synthctl/error.hpp"
#include "synthctl/nelder_mead.hpp"

namespace synthctl {

void StudySpec::validate(const Panel& panel) const {
  const int total = panel.num_days();
  if (!(1 <= t_fit && t_fit < pre_length && pre_length <= total)) {
    throw Error(ErrorCode::InvalidSplit,
                fmt::format("need 1 <= t_fit ({}) < T0 ({}) <= T ({})", t_fit, pre_length, total));
  }
  if (donors.empty()) throw Error(ErrorCode::InvalidArgument, "donor list is empty");
  panel.index_of(treated);
  std::set<UnitId> seen;
  for (const auto& d : donors) {
    if (d == treated) {
      throw Error(ErrorCode::InvalidArgument, fmt::format("treated unit '{}' is in its own donor pool", d.code()));
    }
    if (!seen.insert(d).second) throw Error(ErrorCode::InvalidArgument, fmt::format("donor '{}' listed twice", d.code()));
    panel.index_of(d);
  }
}

PreSplit split_pre_period(int pre_length, int t_fit, TrainPlacement placement) {
  if (!(1 <= t_fit && t_fit < pre_length)) {
    throw Error(ErrorCode::InvalidSplit, fmt::format("need 1 <= t_fit ({}) < T0 ({})", t_fit, pre_length));
  }
  if (placement == TrainPlacement::head) return {{0, t_fit}, {t_fit, pre_length}};
  return {{pre_length - t_fit, pre_length}, {0, pre_length - t_fit}};
}

double mspe(std::span<const double> actual, std::span<const double> synthetic, IndexRange window) {
  if (window.empty()) throw Error(ErrorCode::EmptyWindow, "MSPE window is empty");
  if (window.begin < 0 || static_cast<std::size_t>(window.end) > actual.size() ||
      static_cast<std::size_t>(window.end) > synthetic.size()) {
    throw Error(ErrorCode::InvalidArgument, "MSPE window exceeds the series");
  }
  double s = 0.0;
  for (int t = window.begin; t < window.end; ++t) {
    const double e = actual[t] - synthetic[t];
    s += e * e;
  }
  return s;
}

std::vector<double> inverse_variance_v(const Eigen::MatrixXd& x_all) {
  if (x_all.rows() < 1 || x_all.cols() < 2) {
    throw Error(ErrorCode::DimensionMismatch, "need at least one predictor and two units");
  }
  std::vector<double> v(static_cast<std::size_t>(x_all.rows()));
  double total = 0.0;
  for (Eigen::Index h = 0; h < x_all.rows(); ++h) {
    const double mean = x_all.row(h).mean();
    const double var = (x_all.row(h).array() - mean).square().mean();
    if (!(var > 0.0)) {
      throw Error(ErrorCode::ZeroVariancePredictor, fmt::format("predictor {} is constant across units", h));
    }
    v[h] = 1.0 / var;
    total += v[h];
  }
  for (double& x : v) x /= total;
  return v;
}

WeightProblem PredictorDesign::problem(std::span<const double> v) const {
  WeightProblem p;
  p.x1 = fitted.col(0);
  p.x0 = fitted.rightCols(fitted.cols() - 1);
  p.v = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  return p;
}

PredictorDesign build_design(const StudySpec& spec, const Panel& panel, const PredictorTable& predictors) {
  const PreSplit split = split_pre_period(spec.pre_length, spec.t_fit, spec.placement);
  std::vector<UnitId> units{spec.treated};
  units.insert(units.end(), spec.donors.begin(), spec.donors.end());

  const auto k_table = static_cast<Eigen::Index>(predictors.columns.size());
  PredictorDesign d;
  d.names = predictors.columns;
  d.names.emplace_back(kOutcomeMeanPredictor);
  d.raw.resize(k_table + 1, static_cast<Eigen::Index>(units.size()));
  for (std::size_t u = 0; u < units.size(); ++u) {
    const auto col = static_cast<Eigen::Index>(u);
    if (k_table > 0) {
      const auto& row = predictors.row(units[u]);
      for (Eigen::Index h = 0; h < k_table; ++h) {
        if (!std::isfinite(row[h])) {
          throw Error(ErrorCode::MissingData, fmt::format("predictor '{}' is missing for unit '{}'",
                                                          predictors.columns[h], units[u].code()));
        }
        d.raw(h, col) = row[h];
      }
    }
    auto y = panel.row(units[u]);
    double s = 0.0;
    for (int t = split.training.begin; t < split.training.end; ++t) s += y[t];
    d.raw(k_table, col) = s / split.training.size();
  }

  d.fitted = d.raw;
  if (spec.standardize && spec.v_mode != VMode::inverse_variance) {
    for (Eigen::Index h = 0; h < d.fitted.rows(); ++h) {
      const double mean = d.raw.row(h).mean();
      const double sd = std::sqrt((d.raw.row(h).array() - mean).square().mean());
      if (sd > 0.0) {
        d.fitted.row(h) = (d.raw.row(h).array() - mean) / sd;
      } else {
        d.fitted.row(h).setZero();
      }
    }
  }
  return d;
}

std::vector<std::uint64_t> donor_keys(std::span<const UnitId> donors) {
  std::vector<std::uint64_t> keys;
  keys.reserve(donors.size());
  for (const auto& d : donors) keys.push_back(hash_string(d.code()));
  return keys;
}

Series synthetic_series(const Panel& panel, std::span<const UnitId> donors, std::span<const double> w) {
  if (donors.size() != w.size()) throw Error(ErrorCode::DimensionMismatch, "weights do not match donors");
  Series out(static_cast<std::size_t>(panel.num_days()), 0.0);
  for (std::size_t j = 0; j < donors.size(); ++j) {
    if (w[j] == 0.0) continue;
    auto y = panel.row(donors[j]);
    for (std::size_t t = 0; t < out.size(); ++t) out[t] += w[j] * y[t];
  }
  return out;
}

namespace {

void check_finite_outcomes(const StudySpec& spec, const Panel& panel) {
  auto check = [&](const UnitId& id) {
    for (double x : panel.row(id)) {
      if (!std::isfinite(x)) {
        throw Error(ErrorCode::MissingData, fmt::format("unit '{}' has missing outcome cells", id.code()));
      }
    }
  };
  check(spec.treated);
  for (const auto& d : spec.donors) check(d);
}

std::vector<double> softmax(const std::vector<double>& theta) {
  const double m = *std::max_element(theta.begin(), theta.end());
  std::vector<double> v(theta.size());
  double s = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    v[i] = std::exp(theta[i] - m);
    s += v[i];
  }
  for (double& x : v) x /= s;
  return v;
}

std::vector<double> normalized(std::vector<double> v) {
  double s = 0.0;
  for (double x : v) {
    if (!std::isfinite(x) || x < 0.0) throw Error(ErrorCode::InvalidArgument, "importance weights must be finite and >= 0");
    s += x;
  }
  if (!(s > 0.0)) throw Error(ErrorCode::InvalidArgument, "importance weights sum to zero");
  for (double& x : v) x /= s;
  return v;
}

// Validation MSPE of the synthetic built from weights fitted under v.
class ValidationLoss {
 public:
  ValidationLoss(const StudySpec& spec, const Panel& panel, const PredictorDesign& design, const PreSplit& split,
                 const SolverOptions& opts)
      : spec_(spec), panel_(panel), split_(split), keys_(donor_keys(spec.donors)) {
    problem_ = design.problem(std::vector<double>(design.names.size(), 1.0));
    opts_ = opts;
    actual_ = panel.row(spec.treated);
  }

  double operator()(const std::vector<double>& v) {
    problem_.v = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    WeightSolution sol = solve_w(problem_, spec_.reg, opts_, keys_);
    double s = 0.0;
    for (int t = split_.validation.begin; t < split_.validation.end; ++t) {
      double synth = 0.0;
      for (std::size_t j = 0; j < sol.w.size(); ++j) {
        if (sol.w[j] != 0.0) synth += sol.w[j] * panel_.at(donor_index(j), t);
      }
      const double e = actual_[t] - synth;
      s += e * e;
    }
    return s;
  }

 private:
  std::size_t donor_index(std::size_t j) {
    if (donor_rows_.empty()) {
      for (const auto& d : spec_.donors) donor_rows_.push_back(panel_.index_of(d));
    }
    return donor_rows_[j];
  }

  const StudySpec& spec_;
  const Panel& panel_;
  PreSplit split_;
  std::vector<std::uint64_t> keys_;
  WeightProblem problem_;
  SolverOptions opts_;
  std::span<const double> actual_;
  std::vector<std::size_t> donor_rows_;
};

std::vector<double> search_v(const StudySpec& spec, const Panel& panel, const PredictorDesign& design,
                             const PreSplit& split) {
  const std::size_t k = design.names.size();
  if (k == 1) return {1.0};

  SolverOptions inner = spec.solver;
  inner.restarts = std::max(1, spec.v_search.inner_restarts);
  ValidationLoss loss(spec, panel, design, split, inner);
  std::vector<std::vector<double>> starts;
  starts.emplace_back(k, 0.0);
  std::vector<double> iv;
  try {
    iv = inverse_variance_v(design.raw);
    std::vector<double> theta(k);
    for (std::size_t h = 0; h < k; ++h) theta[h] = std::log(iv[h]);
    if (std::any_of(iv.begin(), iv.end(), [&](double x) { return std::abs(x - iv[0]) > 1e-12; })) {
      starts.push_back(std::move(theta));
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ZeroVariancePredictor) throw;
  }
  SplitMix64 rng(mix_seed(spec.solver.seed, 0x5EA3C4ULL));
  for (int r = 0; r < spec.v_search.random_starts; ++r) {
    std::vector<double> theta(k);
    for (double& x : theta) x = rng.normal();
    starts.push_back(std::move(theta));
  }

  NelderMeadOptions nm;
  nm.max_evals = spec.v_search.max_evals;
  nm.stall_tol = spec.v_search.stall_tol;
  nm.stall_window = spec.v_search.stall_window;
  nm.initial_step = 1.0;
  auto objective = [&](const std::vector<double>& theta) { return loss(softmax(theta)); };
  NelderMeadResult best = nelder_mead_multistart(objective, starts, nm);
  if (!std::isfinite(best.value)) throw Error(ErrorCode::NonConvergence, "V search found no finite validation MSPE");

  // Re-score V* against the start candidates with the full solver, which the
  // final weights use; the search's cheaper inner solves may rank them differently.
  ValidationLoss full(spec, panel, design, split, spec.solver);
  std::vector<double> chosen = softmax(best.x);
  double chosen_loss = full(chosen);
  std::vector<std::vector<double>> floors{std::vector<double>(k, 1.0 / static_cast<double>(k))};
  if (!iv.empty()) floors.push_back(iv);
  for (auto& cand : floors) {
    const double l = full(cand);
    if (l < chosen_loss) {
      chosen_loss = l;
      chosen = std::move(cand);
    }
  }
  return chosen;
}

}  // namespace

std::vector<double> solve_v(const StudySpec& spec, const Panel& panel, const PredictorTable& predictors) {
  spec.validate(panel);
  const PredictorDesign design = build_design(spec, panel, predictors);
  switch (spec.v_mode) {
    case VMode::fixed:
      if (spec.fixed_v.size() != design.names.size()) {
        throw Error(ErrorCode::DimensionMismatch,
                    fmt::format("fixed V has {} entries for {} predictors", spec.fixed_v.size(), design.names.size()));
      }
      return normalized(spec.fixed_v);
    case VMode::inverse_variance:
      return inverse_variance_v(design.raw);
    case VMode::optimized:
      break;
  }
  check_finite_outcomes(spec, panel);
  return search_v(spec, panel, design, split_pre_period(spec.pre_length, spec.t_fit, spec.placement));
}

SynthResult fit_synth(const StudySpec& spec, const Panel& panel, const PredictorTable& predictors) {
  spec.validate(panel);
  check_finite_outcomes(spec, panel);
  const PreSplit split = split_pre_period(spec.pre_length, spec.t_fit, spec.placement);
  const PredictorDesign design = build_design(spec, panel, predictors);

  std::vector<double> v;
  switch (spec.v_mode) {
    case VMode::fixed:
      if (spec.fixed_v.size() != design.names.size()) {
        throw Error(ErrorCode::DimensionMismatch,
                    fmt::format("fixed V has {} entries for {} predictors", spec.fixed_v.size(), design.names.size()));
      }
      v = normalized(spec.fixed_v);
      break;
    case VMode::inverse_variance:
      v = inverse_variance_v(design.raw);
      break;
    case VMode::optimized:
      v = search_v(spec, panel, design, split);
      break;
  }

  const WeightProblem problem = design.problem(v);
  const auto keys = donor_keys(spec.donors);
  WeightSolution sol = solve_w(problem, spec.reg, spec.solver, keys);
  if (spec.sparsify) sol = sparsify_and_resolve(sol, problem, spec.reg, spec.solver);

  SynthResult r;
  r.treated = spec.treated;
  r.donors = spec.donors;
  r.w = sol.w;
  r.predictor_names = design.names;
  r.v = v;
  r.w_objective = sol.objective;
  r.pre_length = spec.pre_length;
  r.split = split;
  auto actual = panel.row(spec.treated);
  r.actual.assign(actual.begin(), actual.end());
  r.synthetic = synthetic_series(panel, spec.donors, r.w);
  r.gap.resize(r.actual.size());
  for (std::size_t t = 0; t < r.gap.size(); ++t) r.gap[t] = r.actual[t] - r.synthetic[t];
  r.pre_mspe = mspe(r.actual, r.synthetic, {0, spec.pre_length});
  r.train_mspe = mspe(r.actual, r.synthetic, split.training);
  r.validation_mspe = mspe(r.actual, r.synthetic, split.validation);
  return r;
}

}  // namespace synthctl
