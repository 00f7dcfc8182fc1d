#include "synthctl/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "synthctl/error.hpp"

namespace synthctl {

namespace {

class Counted {
 public:
  Counted(const Objective& f, int budget) : f_(f), budget_(budget) {}

  double operator()(const std::vector<double>& x) {
    ++evals_;
    double v = f_(x);
    if (!std::isfinite(v)) v = std::numeric_limits<double>::infinity();
    history_.push_back(std::min(v, history_.empty() ? v : history_.back()));
    return v;
  }

  bool exhausted() const { return evals_ >= budget_; }
  int evals() const { return evals_; }

  bool stalled(int window, double tol) const {
    if (static_cast<int>(history_.size()) <= window) return false;
    const double then = history_[history_.size() - 1 - window];
    const double now = history_.back();
    if (!std::isfinite(then)) return false;
    return then - now < tol;
  }

 private:
  const Objective& f_;
  int budget_;
  int evals_ = 0;
  std::vector<double> history_;  // running best
};

}  // namespace

NelderMeadResult nelder_mead(const Objective& f, std::vector<double> start, const NelderMeadOptions& opts) {
  if (start.empty()) throw Error(ErrorCode::InvalidArgument, "Nelder-Mead needs at least one dimension");
  if (opts.max_evals < 1) throw Error(ErrorCode::InvalidArgument, "max_evals must be >= 1");
  const std::size_t n = start.size();
  Counted eval(f, opts.max_evals);

  std::vector<std::vector<double>> pts(n + 1, start);
  std::vector<double> vals(n + 1);
  vals[0] = eval(pts[0]);
  for (std::size_t i = 0; i < n && !eval.exhausted(); ++i) {
    pts[i + 1][i] += opts.initial_step;
    vals[i + 1] = eval(pts[i + 1]);
  }
  if (eval.exhausted()) {
    std::size_t filled = std::min<std::size_t>(static_cast<std::size_t>(eval.evals()), n + 1);
    auto b = std::min_element(vals.begin(), vals.begin() + static_cast<std::ptrdiff_t>(filled)) - vals.begin();
    return {pts[static_cast<std::size_t>(b)], vals[static_cast<std::size_t>(b)], eval.evals()};
  }

  constexpr double kAlpha = 1.0, kGamma = 2.0, kRho = 0.5, kSigma = 0.5;
  std::vector<std::size_t> order(n + 1);
  std::vector<double> centroid(n), xr(n), xe(n), xc(n);

  auto along = [&](const std::vector<double>& from, double t, std::vector<double>& out) {
    for (std::size_t k = 0; k < n; ++k) out[k] = centroid[k] + t * (from[k] - centroid[k]);
  };

  while (!eval.exhausted() && !eval.stalled(opts.stall_window, opts.stall_tol)) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];

    double diameter = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
      for (std::size_t k = 0; k < n; ++k) diameter = std::max(diameter, std::abs(pts[i][k] - pts[best][k]));
    }
    if (diameter < opts.x_tol) break;

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == worst) continue;
      for (std::size_t k = 0; k < n; ++k) centroid[k] += pts[i][k];
    }
    for (double& c : centroid) c /= static_cast<double>(n);

    along(pts[worst], -kAlpha, xr);
    const double fr = eval(xr);
    if (fr < vals[best]) {
      if (eval.exhausted()) {
        pts[worst] = xr;
        vals[worst] = fr;
        break;
      }
      along(pts[worst], -kAlpha * kGamma, xe);
      const double fe = eval(xe);
      if (fe < fr) {
        pts[worst] = xe;
        vals[worst] = fe;
      } else {
        pts[worst] = xr;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = xr;
      vals[worst] = fr;
      continue;
    }
    if (eval.exhausted()) break;
    // Contraction: outside if the reflection beat the worst point, inside otherwise.
    const bool outside = fr < vals[worst];
    along(pts[worst], outside ? -kRho : kRho, xc);
    const double fc = eval(xc);
    if (fc < std::min(fr, vals[worst])) {
      pts[worst] = xc;
      vals[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i <= n && !eval.exhausted(); ++i) {
      if (i == best) continue;
      for (std::size_t k = 0; k < n; ++k) pts[i][k] = pts[best][k] + kSigma * (pts[i][k] - pts[best][k]);
      vals[i] = eval(pts[i]);
    }
  }

  auto b = static_cast<std::size_t>(std::min_element(vals.begin(), vals.end()) - vals.begin());
  return {pts[b], vals[b], eval.evals()};
}

NelderMeadResult nelder_mead_multistart(const Objective& f, const std::vector<std::vector<double>>& starts,
                                        const NelderMeadOptions& opts) {
  if (starts.empty()) throw Error(ErrorCode::InvalidArgument, "no starting point");
  NelderMeadResult best;
  best.value = std::numeric_limits<double>::infinity();
  int used = 0;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const auto& s = starts[i];
    NelderMeadOptions o = opts;
    // Unused budget carries over to the remaining starts.
    o.max_evals = (opts.max_evals - used) / static_cast<int>(starts.size() - i);
    if (o.max_evals < 1) break;
    NelderMeadResult r = nelder_mead(f, s, o);
    used += r.evaluations;
    if (r.value < best.value || best.x.empty()) {
      best.x = std::move(r.x);
      best.value = r.value;
    }
  }
  best.evaluations = used;
  return best;
}

}  // namespace synthctl
