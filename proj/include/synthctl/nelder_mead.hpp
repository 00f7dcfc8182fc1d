#pragma once

#include <functional>
#include <vector>

namespace synthctl {

struct NelderMeadOptions {
  int max_evals = 2000;
  double initial_step = 0.5;
  // A run stops once the best value improved by less than `stall_tol` over the
  // last `stall_window` evaluations.
  double stall_tol = 1e-10;
  int stall_window = 50;
  // Simplex diameter below which a run also stops.
  double x_tol = 1e-12;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  int evaluations = 0;
};

using Objective = std::function<double(const std::vector<double>&)>;

/// Derivative-free minimization from one start. Non-finite values are treated as +inf.
NelderMeadResult nelder_mead(const Objective& f, std::vector<double> start, const NelderMeadOptions& opts);

/// Runs from every start in order, splitting the evaluation budget evenly between
/// the starts still to run; returns the best point seen. Earlier starts win ties.
NelderMeadResult nelder_mead_multistart(const Objective& f, const std::vector<std::vector<double>>& starts,
                                        const NelderMeadOptions& opts);

}  // namespace synthctl
