#include "synthctl/weight_solver.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "synthctl/error.hpp"
#include "synthctl/types.hpp"

namespace synthctl {

void WeightProblem::validate() const {
  if (x0.rows() != x1.size() || v.size() != x1.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                fmt::format("x1 has {} rows, x0 is {}x{}, v has {}", x1.size(), x0.rows(), x0.cols(), v.size()));
  }
  if (x1.size() < 1 || x0.cols() < 1) {
    throw Error(ErrorCode::DimensionMismatch, "need at least one predictor and one donor");
  }
  if (!x1.allFinite() || !x0.allFinite() || !v.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "predictors and importance weights must be finite");
  }
  if ((v.array() < 0.0).any()) throw Error(ErrorCode::InvalidArgument, "importance weights must be >= 0");
}

namespace {

void check_reg(const Regularization& reg) {
  if (!std::isfinite(reg.l1) || !std::isfinite(reg.l2) || reg.l1 < 0.0 || reg.l2 < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "regularization coefficients must be finite and >= 0");
  }
}

// Evaluates the descent function and its gradient. Without regularization the
// squared fit term is minimized (same argmin, smooth at a perfect fit). Under
// the simplex the 1-norm is constant and is left out of the descent function.
class DescentFunction {
 public:
  DescentFunction(const WeightProblem& p, const Regularization& reg, ConstraintMode mode, double mu)
      : p_(p),
        mu2_(mu * mu),
        l1_(reg.l1),
        l2_(mode == ConstraintMode::simplex ? 0.0 : reg.l2),
        squared_(reg.l1 == 0.0 && l2_ == 0.0),
        resid_(p.x1.size()) {}

  double value(const Eigen::VectorXd& w) {
    resid_.noalias() = p_.x1 - p_.x0 * w;
    const double q = (p_.v.array() * resid_.array().square()).sum();
    if (squared_) return q;
    return std::sqrt(q + mu2_) + l1_ * w.norm() + l2_ * w.sum();
  }

  // Gradient at the point of the last value() call.
  void gradient(const Eigen::VectorXd& w, Eigen::VectorXd& g) {
    Eigen::VectorXd vr = p_.v.array() * resid_.array();
    g.noalias() = -(p_.x0.transpose() * vr);
    if (squared_) {
      g *= 2.0;
      return;
    }
    const double q = vr.dot(resid_) + mu2_;
    if (q > 0.0) {
      g /= std::sqrt(q);
    } else {
      g.setZero();
    }
    const double wn = w.norm();
    if (wn > 0.0) g += (l1_ / wn) * w;
    if (l2_ > 0.0) g.array() += l2_;
  }

 private:
  const WeightProblem& p_;
  double mu2_;
  double l1_;
  double l2_;
  bool squared_;
  Eigen::VectorXd resid_;
};

void project_inplace(Eigen::VectorXd& w, ConstraintMode mode, std::vector<double>& scratch) {
  if (mode == ConstraintMode::penalized) {
    w = w.cwiseMax(0.0);
    return;
  }
  const auto n = static_cast<std::size_t>(w.size());
  scratch.assign(w.data(), w.data() + n);
  std::sort(scratch.begin(), scratch.end(), std::greater<>());
  double cumsum = 0.0;
  double theta = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cumsum += scratch[i];
    const double t = (cumsum - 1.0) / static_cast<double>(i + 1);
    if (scratch[i] - t > 0.0) theta = t;
  }
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = std::max(w[i] - theta, 0.0);
}

std::vector<double> finalize(const Eigen::VectorXd& w, ConstraintMode mode) {
  std::vector<double> out(w.data(), w.data() + w.size());
  for (double& x : out) x = std::max(x, 0.0);
  if (mode == ConstraintMode::simplex) {
    const double s = std::accumulate(out.begin(), out.end(), 0.0);
    if (s > 0.0 && std::abs(s - 1.0) > 1e-14) {
      for (double& x : out) x /= s;
    }
  }
  return out;
}

}  // namespace

double objective(std::span<const double> w, const WeightProblem& problem, const Regularization& reg) {
  problem.validate();
  if (static_cast<Eigen::Index>(w.size()) != problem.x0.cols()) {
    throw Error(ErrorCode::DimensionMismatch,
                fmt::format("w has {} entries for {} donors", w.size(), problem.x0.cols()));
  }
  Eigen::Map<const Eigen::VectorXd> wv(w.data(), static_cast<Eigen::Index>(w.size()));
  Eigen::VectorXd r = problem.x1 - problem.x0 * wv;
  const double fit = std::sqrt((problem.v.array() * r.array().square()).sum());
  return fit + reg.l1 * wv.norm() + reg.l2 * wv.cwiseAbs().sum();
}

std::vector<double> project_to_simplex(std::span<const double> y) {
  if (y.empty()) return {};
  Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  std::vector<double> scratch;
  project_inplace(w, ConstraintMode::simplex, scratch);
  return std::vector<double>(w.data(), w.data() + w.size());
}

namespace {

// mu > 0 replaces the fit norm by sqrt(q + mu^2), which is smooth where the fit is exact.
WeightSolution descend(const WeightProblem& problem, const Regularization& reg, const SolverOptions& opts,
                       std::vector<double> start, std::vector<double>* trace, double mu) {
  if (opts.max_iters < 1 || !(opts.tol > 0.0) || !(opts.step_tol >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "solver needs max_iters >= 1, tol > 0 and step_tol >= 0");
  }
  const Eigen::Index n = problem.x0.cols();
  if (static_cast<Eigen::Index>(start.size()) != n) {
    throw Error(ErrorCode::DimensionMismatch, "start point does not match the donor count");
  }

  std::vector<double> scratch;
  DescentFunction fn(problem, reg, opts.mode, mu);
  Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(start.data(), n);
  project_inplace(w, opts.mode, scratch);

  Eigen::VectorXd g(n), g_new(n), w_new(n), d(n);
  double f = fn.value(w);
  if (!std::isfinite(f)) throw Error(ErrorCode::NonConvergence, "objective is not finite at the start point");
  fn.gradient(w, g);
  if (trace) trace->push_back(f);

  constexpr double kArmijo = 1e-4;
  double step = 1.0;
  bool converged = false;
  int it = 0;
  int slow = 0;
  for (; it < opts.max_iters; ++it) {
    bool accepted = false;
    double f_new = f;
    double s = step;
    for (int bt = 0; bt < 80; ++bt) {
      w_new.noalias() = w - s * g;
      project_inplace(w_new, opts.mode, scratch);
      d = w_new - w;
      if (d.lpNorm<Eigen::Infinity>() == 0.0) break;
      f_new = fn.value(w_new);
      if (f_new <= f + kArmijo * g.dot(d)) {
        accepted = true;
        break;
      }
      s *= 0.5;
    }
    if (!accepted) {
      // No representable descent step: stationary to working precision.
      converged = true;
      break;
    }
    if (!std::isfinite(f_new)) throw Error(ErrorCode::NonConvergence, "objective became non-finite");
    fn.gradient(w_new, g_new);

    const double decrease = f - f_new;
    const Eigen::VectorXd y = g_new - g;
    const double sy = d.dot(y);
    step = sy > 0.0 ? d.squaredNorm() / sy : 2.0 * s;
    step = std::clamp(step, 1e-14, 1e14);

    w.swap(w_new);
    g.swap(g_new);
    const double f_old = f;
    f = f_new;
    if (trace) trace->push_back(f);

    if (f == 0.0) {
      converged = true;
      ++it;
      break;
    }
    // Two consecutive negligible relative decreases, with steps that have
    // stopped moving w, end the run.
    const bool small = decrease <= opts.tol * std::abs(f_old) && d.lpNorm<Eigen::Infinity>() <= opts.step_tol;
    slow = small ? slow + 1 : 0;
    if (slow >= 2) {
      converged = true;
      ++it;
      break;
    }
  }

  WeightSolution out;
  out.w = finalize(w, opts.mode);
  out.objective = objective(out.w, problem, reg);
  out.converged = converged;
  out.iterations = it;
  return out;
}

}  // namespace

WeightSolution descend_from(const WeightProblem& problem, const Regularization& reg, const SolverOptions& opts,
                            std::vector<double> start, std::vector<double>* trace) {
  problem.validate();
  check_reg(reg);
  return descend(problem, reg, opts, std::move(start), trace, 0.0);
}

namespace {

// The fit norm has a kink wherever x1 is reproduced exactly, which stalls
// projected gradient. Walk down a smoothing path before the exact descent.
WeightSolution descend_with_continuation(const WeightProblem& problem, const Regularization& reg,
                                         const SolverOptions& opts, std::vector<double> start) {
  const bool smooth_fit = reg.l1 == 0.0 && (opts.mode == ConstraintMode::simplex || reg.l2 == 0.0);
  if (smooth_fit) return descend(problem, reg, opts, std::move(start), nullptr, 0.0);
  Eigen::Map<const Eigen::VectorXd> w0(start.data(), static_cast<Eigen::Index>(start.size()));
  const Eigen::VectorXd r0 = problem.x1 - problem.x0 * w0;
  const double scale = std::sqrt((problem.v.array() * r0.array().square()).sum()) + 1e-300;
  int iters = 0;
  for (double rel : {1e-3, 1e-6, 1e-9}) {
    // Smoothing finer than the requested step precision is wasted work.
    if (rel < opts.step_tol) break;
    WeightSolution stage = descend(problem, reg, opts, std::move(start), nullptr, rel * scale);
    iters += stage.iterations;
    start = std::move(stage.w);
  }
  WeightSolution out = descend(problem, reg, opts, std::move(start), nullptr, 0.0);
  out.iterations += iters;
  return out;
}

}  // namespace

WeightSolution solve_w(const WeightProblem& problem, const Regularization& reg, const SolverOptions& opts,
                       std::span<const std::uint64_t> donor_keys) {
  problem.validate();
  check_reg(reg);
  if (opts.restarts < 1) throw Error(ErrorCode::InvalidArgument, "restarts must be >= 1");
  const auto n = static_cast<std::size_t>(problem.x0.cols());
  if (!donor_keys.empty() && donor_keys.size() != n) {
    throw Error(ErrorCode::DimensionMismatch, "donor_keys must match the donor count");
  }
  if (n == 1 && opts.mode == ConstraintMode::simplex) {
    WeightSolution one;
    one.w = {1.0};
    one.objective = objective(one.w, problem, reg);
    one.converged = true;
    return one;
  }

  // Restarts are ranked without the 1-norm term when it is constant on the feasible set.
  Regularization ranking = reg;
  if (opts.mode == ConstraintMode::simplex) ranking.l2 = 0.0;
  WeightSolution best;
  double best_rank = std::numeric_limits<double>::infinity();
  best.objective = best_rank;
  int total_iters = 0;
  for (int r = 0; r < opts.restarts; ++r) {
    // Dirichlet(1,...,1) via normalized Exp(1) draws, one stream per donor key.
    std::vector<double> start(n);
    const std::uint64_t restart_seed = mix_seed(opts.seed, static_cast<std::uint64_t>(r));
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const std::uint64_t key = donor_keys.empty() ? j : donor_keys[j];
      SplitMix64 g(mix_seed(restart_seed, key));
      start[j] = -std::log(g.uniform());
      total += start[j];
    }
    for (double& x : start) x /= total;

    WeightSolution cand = descend_with_continuation(problem, reg, opts, std::move(start));
    total_iters += cand.iterations;
    const double rank = objective(cand.w, problem, ranking);
    if (rank < best_rank) {
      best_rank = rank;
      best = std::move(cand);
    }
  }
  if (!std::isfinite(best.objective)) throw Error(ErrorCode::NonConvergence, "no restart produced a finite objective");
  best.iterations = total_iters;
  return best;
}

std::vector<double> sparsify_weights(std::span<const double> w) {
  std::vector<double> out(w.begin(), w.end());
  if (out.size() < 5) return out;
  std::vector<double> sorted = out;
  std::stable_sort(sorted.begin(), sorted.end(), std::greater<>());
  const double threshold = 0.5 * sorted[4];
  double kept = 0.0;
  for (double& x : out) {
    if (x < threshold) x = 0.0;
    kept += x;
  }
  if (kept > 0.0 && kept != 1.0) {
    for (double& x : out) x /= kept;
  }
  return out;
}

WeightSolution sparsify_and_resolve(const WeightSolution& solution, const WeightProblem& problem,
                                    const Regularization& reg, const SolverOptions& opts) {
  problem.validate();
  const auto n = static_cast<std::size_t>(problem.x0.cols());
  if (solution.w.size() != n) throw Error(ErrorCode::DimensionMismatch, "solution does not match the donor count");
  if (n < 5) return solution;

  const std::vector<double> thinned = sparsify_weights(solution.w);
  std::vector<Eigen::Index> keep;
  for (std::size_t j = 0; j < n; ++j) {
    if (thinned[j] > 0.0) keep.push_back(static_cast<Eigen::Index>(j));
  }
  if (keep.size() <= 1) {
    WeightSolution out = solution;
    out.w = thinned;
    out.objective = objective(out.w, problem, reg);
    return out;
  }

  WeightProblem sub;
  sub.x1 = problem.x1;
  sub.v = problem.v;
  sub.x0.resize(problem.x0.rows(), static_cast<Eigen::Index>(keep.size()));
  std::vector<double> start;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    sub.x0.col(static_cast<Eigen::Index>(i)) = problem.x0.col(keep[i]);
    start.push_back(thinned[static_cast<std::size_t>(keep[i])]);
  }
  WeightSolution resolved = descend_with_continuation(sub, reg, opts, std::move(start));

  WeightSolution out;
  out.w.assign(n, 0.0);
  for (std::size_t i = 0; i < keep.size(); ++i) out.w[static_cast<std::size_t>(keep[i])] = resolved.w[i];
  out.objective = objective(out.w, problem, reg);
  out.converged = resolved.converged;
  out.iterations = solution.iterations + resolved.iterations;
  return out;
}

}  // namespace synthctl
