#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace synthctl {

/// Elastic-net coefficients. `l1` multiplies the 2-norm of w and `l2` the 1-norm,
/// so the customary setting reads l1 = 0.6, l2 = 0.1.
struct Regularization {
  double l1 = 0.6;
  double l2 = 0.1;

  static Regularization none() { return {0.0, 0.0}; }
};

enum class ConstraintMode {
  simplex,    // w >= 0, sum w = 1
  penalized,  // w >= 0 only; the penalties carry the shrinkage
};

struct SolverOptions {
  int max_iters = 2000;
  double tol = 1e-9;  // relative objective decrease at which a descent run stops
  double step_tol = 1e-9;  // ...provided the step's max-norm is also below this
  int restarts = 8;
  ConstraintMode mode = ConstraintMode::simplex;
  std::uint64_t seed = 42;
};

struct WeightSolution {
  std::vector<double> w;
  double objective = 0.0;
  bool converged = false;
  int iterations = 0;  // summed over restarts
};

/// Inner problem data: treated predictor vector x1 (k), donor predictors x0
/// (k x J), importance weights v (k).
struct WeightProblem {
  Eigen::VectorXd x1;
  Eigen::MatrixXd x0;
  Eigen::VectorXd v;

  void validate() const;  // throws DimensionMismatch / InvalidArgument
};

/// (sum_h v_h (x1_h - (x0 w)_h)^2)^(1/2) + l1 ||w||_2 + l2 ||w||_1
double objective(std::span<const double> w, const WeightProblem& problem, const Regularization& reg);

/// Euclidean projection onto the unit simplex (sort-based).
std::vector<double> project_to_simplex(std::span<const double> y);

/// Minimizes the objective over the constraint set from `restarts` Dirichlet(1)
/// starting points. Start coordinates are keyed by donor identity (`donor_keys`,
/// defaulting to column positions) so permuting donors permutes the solution.
WeightSolution solve_w(const WeightProblem& problem, const Regularization& reg, const SolverOptions& opts,
                       std::span<const std::uint64_t> donor_keys = {});

/// Single projected-gradient descent from a given start. Exposed for the
/// re-optimization step and for tests of monotone descent.
WeightSolution descend_from(const WeightProblem& problem, const Regularization& reg, const SolverOptions& opts,
                            std::vector<double> start, std::vector<double>* trace = nullptr);

/// Zeroes weights below half of the 5th largest weight and renormalizes.
/// Vectors with fewer than five entries are returned unchanged.
std::vector<double> sparsify_weights(std::span<const double> w);

/// sparsify_weights followed by a descent restricted to the surviving donors,
/// started from the renormalized point.
WeightSolution sparsify_and_resolve(const WeightSolution& solution, const WeightProblem& problem,
                                    const Regularization& reg, const SolverOptions& opts);

}  // namespace synthctl
