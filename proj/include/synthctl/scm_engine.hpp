#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "synthctl/panel_store.hpp"
#include "synthctl/types.hpp"
#include "synthctl/weight_solver.hpp"

namespace synthctl {

enum class VMode { optimized, inverse_variance, fixed };
enum class TrainPlacement { head, tail };

struct VSearchOptions {
  int max_evals = 400;
  int random_starts = 1;  // in addition to the uniform and inverse-variance starts
  double stall_tol = 1e-10;
  int stall_window = 50;
  // Restarts used by the inner weight solve while V is searched; the final W*
  // always uses the full StudySpec::solver settings.
  int inner_restarts = 2;
};

struct StudySpec {
  UnitId treated;
  std::vector<UnitId> donors;
  int pre_length = 0;  // T0: days before the intervention
  int t_fit = 10;      // training window length
  VMode v_mode = VMode::optimized;
  std::vector<double> fixed_v;  // used when v_mode == fixed; one entry per design predictor
  Regularization reg;
  TrainPlacement placement = TrainPlacement::tail;
  bool standardize = true;
  bool sparsify = false;
  SolverOptions solver;
  VSearchOptions v_search;

  void validate(const Panel& panel) const;
};

struct PreSplit {
  IndexRange training;
  IndexRange validation;
};

/// head: training = first t_fit days; tail: training = last t_fit days before T0.
PreSplit split_pre_period(int pre_length, int t_fit, TrainPlacement placement);

/// Sum (not mean) of squared prediction errors over the window.
double mspe(std::span<const double> actual, std::span<const double> synthetic, IndexRange window);

/// v_h proportional to 1 / var_h, where x_all is predictors x units. Population variance.
std::vector<double> inverse_variance_v(const Eigen::MatrixXd& x_all);

/// Predictor matrix entering the weight problem. Column 0 is the treated unit,
/// columns 1..J the donors in the order given. The last row is the outcome mean over
/// the training window.
struct PredictorDesign {
  std::vector<std::string> names;
  Eigen::MatrixXd raw;
  Eigen::MatrixXd fitted;  // z-scored across units when standardizing

  WeightProblem problem(std::span<const double> v) const;
};

inline constexpr const char* kOutcomeMeanPredictor = "outcome_mean_training";

PredictorDesign build_design(const StudySpec& spec, const Panel& panel, const PredictorTable& predictors);

std::vector<std::uint64_t> donor_keys(std::span<const UnitId> donors);

/// V* minimizing the validation MSPE of the synthetic whose weights are fitted
/// on the training-window predictors. Nelder-Mead over a softmax parameterization.
std::vector<double> solve_v(const StudySpec& spec, const Panel& panel, const PredictorTable& predictors);

struct SynthResult {
  UnitId treated;
  std::vector<UnitId> donors;
  std::vector<double> w;
  std::vector<std::string> predictor_names;
  std::vector<double> v;
  double w_objective = 0.0;
  int pre_length = 0;
  PreSplit split;
  Series actual;
  Series synthetic;
  Series gap;
  double pre_mspe = 0.0;
  double train_mspe = 0.0;
  double validation_mspe = 0.0;
};

SynthResult fit_synth(const StudySpec& spec, const Panel& panel, const PredictorTable& predictors);

/// Synthetic series sum_j w_j Y_jt over the whole panel horizon.
Series synthetic_series(const Panel& panel, std::span<const UnitId> donors, std::span<const double> w);

}  // namespace synthctl
