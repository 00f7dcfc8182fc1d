#include "synthctl/logistic_vax.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "synthctl/error.hpp"
#include "synthctl/nelder_mead.hpp"

namespace synthctl {

double logistic_predict(double K, double nu, double p0, double t) {
  if (!(K > 0.0) || !(p0 > 0.0)) throw Error(ErrorCode::InvalidArgument, "K and p0 must be positive");
  // Divided through by e^{nu t} so large nu*t does not overflow.
  const double decay = std::exp(-nu * t);
  return K * p0 / (p0 + (K - p0) * decay);
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

struct Observations {
  std::vector<double> t;
  std::vector<double> y;
};

struct Params {
  double K, nu, p0;
};

class LogisticLoss {
 public:
  LogisticLoss(const Observations& obs, double lower, double upper) : obs_(obs), lower_(lower), upper_(upper) {}

  Params decode(const std::vector<double>& theta) const {
    const double K = lower_ + (upper_ - lower_) * sigmoid(theta[0]);
    return {K, std::exp(theta[1]), K * sigmoid(theta[2])};
  }

  std::vector<double> encode(const Params& p) const {
    const double fk = std::clamp((p.K - lower_) / (upper_ - lower_), 1e-12, 1.0 - 1e-12);
    const double fp = std::clamp(p.p0 / p.K, 1e-12, 1.0 - 1e-12);
    return {logit(fk), std::log(std::max(p.nu, 1e-12)), logit(fp)};
  }

  double sse(const Params& p) const {
    double s = 0.0;
    for (std::size_t i = 0; i < obs_.t.size(); ++i) {
      const double e = obs_.y[i] - logistic_predict(p.K, p.nu, p.p0, obs_.t[i]);
      s += e * e;
    }
    return s;
  }

  double operator()(const std::vector<double>& theta) const { return sse(decode(theta)); }

 private:
  const Observations& obs_;
  double lower_, upper_;
};

}  // namespace

LogisticFit fit_logistic(std::span<const double> series, const LogisticFitOptions& opts) {
  Observations obs;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (std::isfinite(series[i])) {
      obs.t.push_back(static_cast<double>(i));
      obs.y.push_back(series[i]);
    }
  }
  if (static_cast<int>(obs.y.size()) < opts.min_points) {
    throw Error(ErrorCode::DegenerateSeries,
                fmt::format("{} valid points, need {}", obs.y.size(), opts.min_points));
  }
  const auto [lo_it, hi_it] = std::minmax_element(obs.y.begin(), obs.y.end());
  const double ymin = *lo_it, ymax = *hi_it;
  if (!(ymax > 0.0)) throw Error(ErrorCode::DegenerateSeries, "series is never positive");
  if (ymax >= opts.k_upper) {
    throw Error(ErrorCode::DegenerateSeries, fmt::format("series reaches {}, above the K bound {}", ymax, opts.k_upper));
  }
  if (ymax - ymin <= 1e-12 * ymax) {
    LogisticFit flat{ymax, 0.0, ymax, 0.0, false};
    for (double y : obs.y) flat.sse += (y - ymax) * (y - ymax);
    return flat;
  }

  LogisticLoss loss(obs, ymax, opts.k_upper);

  // Initial guess: K slightly above the peak, p0 from the first positive value,
  // nu from the slope of logit(y / K) against t.
  Params guess{};
  guess.K = std::min(1.05 * ymax, 0.5 * (ymax + opts.k_upper));
  guess.p0 = ymax * 1e-3;
  for (double y : obs.y) {
    if (y > 0.0) {
      guess.p0 = std::min(y, 0.99 * guess.K);
      break;
    }
  }
  {
    double st = 0, sz = 0, stt = 0, stz = 0, n = 0;
    for (std::size_t i = 0; i < obs.t.size(); ++i) {
      const double y = obs.y[i];
      if (y <= 0.0 || y >= guess.K) continue;
      const double z = std::log(y / (guess.K - y));
      st += obs.t[i];
      sz += z;
      stt += obs.t[i] * obs.t[i];
      stz += obs.t[i] * z;
      n += 1;
    }
    const double denom = n * stt - st * st;
    const double slope = n >= 2 && denom > 0.0 ? (n * stz - st * sz) / denom : 0.01;
    guess.nu = std::max(slope, 1e-4);
  }

  std::vector<std::vector<double>> starts{loss.encode(guess)};
  SplitMix64 rng(mix_seed(opts.seed, 0x106157ULL));
  for (int r = 0; r < opts.random_starts; ++r) {
    std::vector<double> s = starts.front();
    s[0] += rng.normal();
    s[1] += 0.5 * rng.normal();
    s[2] += rng.normal();
    starts.push_back(std::move(s));
  }

  NelderMeadOptions nm;
  nm.initial_step = 0.5;
  nm.stall_tol = 1e-13;
  nm.stall_window = 100;
  nm.x_tol = 1e-10;
  nm.max_evals = opts.max_evals_per_start * static_cast<int>(starts.size());
  NelderMeadResult best = nelder_mead_multistart(loss, starts, nm);

  // Restart from the incumbent with a fresh simplex until it stops improving.
  nm.max_evals = opts.max_evals_per_start;
  for (int polish = 0; polish < 8; ++polish) {
    nm.initial_step = polish % 2 == 0 ? 0.1 : 0.01;
    NelderMeadResult again = nelder_mead(loss, best.x, nm);
    const bool improved = again.value < best.value - 1e-14 * (1.0 + best.value);
    if (again.value < best.value) best = std::move(again);
    if (!improved && polish >= 1) break;
  }

  const Params p = loss.decode(best.x);
  return {p.K, p.nu, p.p0, loss.sse(p), true};
}

std::string to_string(Quadrant q) {
  switch (q) {
    case Quadrant::HiK_HiV: return "HiK_HiV";
    case Quadrant::HiK_LoV: return "HiK_LoV";
    case Quadrant::LoK_HiV: return "LoK_HiV";
    case Quadrant::LoK_LoV: return "LoK_LoV";
  }
  return "?";
}

std::map<UnitId, Quadrant> classify_quadrant(const std::map<UnitId, LogisticFit>& fits) {
  if (fits.size() < 2) throw Error(ErrorCode::TooFewUnits, "quadrant split needs at least two units");
  double mk = 0.0, mv = 0.0;
  for (const auto& [id, f] : fits) {
    mk += f.K;
    mv += f.nu;
  }
  mk /= static_cast<double>(fits.size());
  mv /= static_cast<double>(fits.size());
  std::map<UnitId, Quadrant> out;
  for (const auto& [id, f] : fits) {
    const bool hi_k = !(f.K < mk);
    const bool hi_v = !(f.nu < mv);
    out[id] = hi_k ? (hi_v ? Quadrant::HiK_HiV : Quadrant::HiK_LoV) : (hi_v ? Quadrant::LoK_HiV : Quadrant::LoK_LoV);
  }
  return out;
}

std::string to_string(LogisticParam p) { return p == LogisticParam::K ? "K" : "nu"; }

Regression theme_regression(std::span<const double> param, std::span<const double> theme) {
  if (param.size() != theme.size()) throw Error(ErrorCode::DimensionMismatch, "param and theme differ in length");
  const std::size_t n = param.size();
  if (n < 3) throw Error(ErrorCode::TooFewUnits, "regression needs at least three units");
  const double mx = std::accumulate(theme.begin(), theme.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(param.begin(), param.end(), 0.0) / static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = theme[i] - mx, dy = param[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (!(sxx > 0.0)) throw Error(ErrorCode::ZeroVariance, "index is constant across units");
  if (!(syy > 0.0)) throw Error(ErrorCode::ZeroVariance, "parameter is constant across units");
  return {sxy / sxx, sxy / std::sqrt(sxx * syy)};
}

Regression theme_regression(LogisticParam param, const std::map<UnitId, double>& theme,
                            const std::map<UnitId, LogisticFit>& fits) {
  std::vector<double> y, x;
  for (const auto& [id, f] : fits) {
    auto it = theme.find(id);
    if (it == theme.end()) continue;
    y.push_back(param == LogisticParam::K ? f.K : f.nu);
    x.push_back(it->second);
  }
  return theme_regression(y, x);
}

std::vector<BinStat> decile_summary(std::span<const double> param, std::span<const double> index, int bins) {
  if (param.size() != index.size()) throw Error(ErrorCode::DimensionMismatch, "param and index differ in length");
  if (bins < 1) throw Error(ErrorCode::InvalidArgument, "bins must be >= 1");
  const std::size_t n = param.size();
  const auto nb = static_cast<std::size_t>(bins);
  if (n < nb) throw Error(ErrorCode::TooFewUnits, fmt::format("{} units for {} bins", n, bins));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return index[a] < index[b]; });

  std::vector<BinStat> out(nb);
  std::size_t pos = 0;
  for (std::size_t b = 0; b < nb; ++b) {
    const std::size_t size = n / nb + (b < n % nb ? 1 : 0);
    double sum = 0.0;
    for (std::size_t i = pos; i < pos + size; ++i) sum += param[order[i]];
    const double mean = sum / static_cast<double>(size);
    double ss = 0.0;
    for (std::size_t i = pos; i < pos + size; ++i) ss += (param[order[i]] - mean) * (param[order[i]] - mean);
    out[b] = {size, mean, std::sqrt(ss / static_cast<double>(size))};
    pos += size;
  }
  return out;
}

void validate_ccvi(const KeyedTable& table) {
  if (table.columns.size() != 7) {
    throw Error(ErrorCode::MalformedCsv,
                fmt::format("CCVI table needs 6 theme columns and a global index, found {} columns",
                            table.columns.size()));
  }
  for (std::size_t u = 0; u < table.units.size(); ++u) {
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      const double x = table.rows[u][c];
      if (!(x >= 0.0 && x <= 1.0)) {
        throw Error(ErrorCode::MalformedCsv, fmt::format("CCVI '{}' of unit '{}' is {}, outside [0, 1]",
                                                         table.columns[c], table.units[u].code(), x));
      }
    }
  }
}

KeyedTable read_ccvi(const std::filesystem::path& path) {
  KeyedTable t = read_keyed_table(path);
  validate_ccvi(t);
  return t;
}

}  // namespace synthctl
