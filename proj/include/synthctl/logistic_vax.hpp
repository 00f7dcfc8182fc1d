#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "synthctl/panel_store.hpp"
#include "synthctl/types.hpp"

namespace synthctl {

/// Logistic vaccination curve p_t = K p0 e^{nu t} / (K + p0 (e^{nu t} - 1)),
/// t in days from the first observation.
struct LogisticFit {
  double K = 0.0;    // asymptotic rate, percent
  double nu = 0.0;   // per day
  double p0 = 0.0;   // rate at t = 0, percent
  double sse = 0.0;
  bool identifiable = true;  // false for flat series, where K cannot be told apart from p0
};

double logistic_predict(double K, double nu, double p0, double t);

struct LogisticFitOptions {
  std::uint64_t seed = 42;
  double k_upper = 120.0;
  int random_starts = 4;
  int max_evals_per_start = 4000;
  int min_points = 10;
};

/// Least squares over (K, nu, p0) with K in (max(series), k_upper], nu >= 0 and
/// 0 < p0 <= K. NaN cells are ignored.
LogisticFit fit_logistic(std::span<const double> series, const LogisticFitOptions& opts = {});

enum class Quadrant { HiK_HiV, HiK_LoV, LoK_HiV, LoK_LoV };

std::string to_string(Quadrant q);

/// Splits at the cross-unit means of K and nu; values equal to a mean count as high.
std::map<UnitId, Quadrant> classify_quadrant(const std::map<UnitId, LogisticFit>& fits);

enum class LogisticParam { K, nu };

std::string to_string(LogisticParam p);

struct Regression {
  double slope = 0.0;  // OLS slope of param on the index
  double corr = 0.0;   // Pearson
};

Regression theme_regression(std::span<const double> param, std::span<const double> theme);

/// Joins fits and index values on unit; units missing from either side are skipped.
Regression theme_regression(LogisticParam param, const std::map<UnitId, double>& theme,
                            const std::map<UnitId, LogisticFit>& fits);

struct BinStat {
  std::size_t count = 0;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

/// Ranks units by index into `bins` equal-count bins (the first
/// n % bins bins take one extra unit) and summarizes param per bin.
std::vector<BinStat> decile_summary(std::span<const double> param, std::span<const double> index, int bins = 10);

/// Per-unit CCVI table: six theme indices plus the global index, all in [0, 1].
KeyedTable read_ccvi(const std::filesystem::path& path);
void validate_ccvi(const KeyedTable& table);

}  // namespace synthctl
