#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "synthctl/error.hpp"
#include "synthctl/inference.hpp"

using namespace synthctl;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Io;
}

constexpr int kDays = 80;
constexpr int kPre = 60;

std::vector<double> wiggle(double level, double phase, int days = kDays) {
  std::vector<double> y(days);
  for (int t = 0; t < days; ++t) y[t] = level + 0.2 * t + 0.5 * std::sin(0.3 * t + phase);
  return y;
}

StudySpec spec_for(const std::string& treated, const std::vector<std::string>& donors) {
  StudySpec s;
  s.treated = UnitId(treated);
  s.donors = to_unit_ids(donors);
  s.pre_length = kPre;
  s.reg = Regularization::none();
  return s;
}

// Ten units with distinct wiggles; "T" is the treated one.
struct TenUnits {
  Panel panel;
  std::vector<std::string> donors;
};

TenUnits ten_units(double effect = 0.0) {
  std::vector<std::string> codes{"T"};
  std::vector<std::vector<double>> rows{wiggle(5.0, 0.0)};
  for (int t = kPre; t < kDays; ++t) rows[0][t] += effect;
  for (int j = 0; j < 9; ++j) {
    codes.push_back("D" + std::to_string(j));
    rows.push_back(wiggle(static_cast<double>(j), 0.7 * (j + 1)));
  }
  return {fixtures::make_panel(codes, rows), std::vector<std::string>(codes.begin() + 1, codes.end())};
}

}  // namespace

TEST_CASE("rmse_window") {
  const std::vector<double> a{1, 2}, s{1, 0};
  CHECK(rmse_window(a, a, 0, 1) == 0.0);
  CHECK(rmse_window(a, s, 0, 1) == doctest::Approx(std::sqrt(2.0)));
  std::vector<double> x{3, 1, 4, 1, 5}, y = x;
  for (auto& v : y) v -= 0.75;
  CHECK(rmse_window(x, y, 1, 4) == doctest::Approx(0.75));
  for (int t = 0; t < 5; ++t) CHECK(rmse_window(x, y, t, t) == doctest::Approx(0.75));
  CHECK(code_of([&] { rmse_window(a, s, 1, 0); }) == ErrorCode::EmptyWindow);
  CHECK(code_of([&] { rmse_window(a, s, 0, 2); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("post_pre_ratio") {
  CHECK(post_pre_ratio(0.7, 0.7) == 1.0);
  CHECK(post_pre_ratio(2.0, 0.5) == 4.0);
  CHECK(code_of([] { post_pre_ratio(1.0, 0.0); }) == ErrorCode::ZeroPreRmse);
}

TEST_CASE("entry_from_fit floors a perfect pre-period fit") {
  SynthResult fit;
  fit.treated = UnitId("T");
  fit.pre_length = 3;
  fit.actual = {1, 2, 3, 5, 6};
  fit.synthetic = {1, 2, 3, 4, 4};
  auto e = entry_from_fit(fit);
  CHECK(e.pre_floored);
  CHECK(e.rmse_pre == 0.0);
  CHECK(e.rmse_post == doctest::Approx(std::sqrt(2.5)));
  CHECK(e.r == doctest::Approx(std::sqrt(2.5) / kPreRmseFloor));
  fit.pre_length = 5;
  CHECK(code_of([&] { entry_from_fit(fit); }) == ErrorCode::EmptyWindow);
}

TEST_CASE("p_value: examples") {
  CHECK(p_value(std::vector<double>{2.0, 1.0, 3.0, 2.5}, 0) == 0.5);
  CHECK(p_value(std::vector<double>{9.0, 1.0, 3.0, 2.5}, 0) == 0.0);
  std::vector<double> r{0.1, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  CHECK(p_value(r, 0) == 0.9);
  CHECK(p_value(std::vector<double>(5, 1.0), 2) == 0.0);
  CHECK(code_of([&] { p_value(r, 10); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("p_value: matches enumeration over every rank permutation") {
  for (std::size_t n = 1; n <= 6; ++n) {
    std::vector<double> r(n);
    std::iota(r.begin(), r.end(), 1.0);
    r[n / 2] = r[0];  // include a tie
    std::sort(r.begin(), r.end());
    do {
      for (std::size_t i = 0; i < n; ++i) {
        const double p = p_value(r, i);
        CHECK(p == oracle::strict_count_p(r, i));
        const double scaled = p * static_cast<double>(n);
        CHECK(scaled == std::round(scaled));
        std::vector<double> transformed(n);
        std::transform(r.begin(), r.end(), transformed.begin(), [](double x) { return std::exp(3.0 * x) - 7.0; });
        CHECK(p_value(transformed, i) == p);
      }
    } while (std::next_permutation(r.begin(), r.end()));
  }
}

TEST_CASE("placebo_run: one entry per unit, sorted, same T0") {
  auto f = ten_units();
  auto spec = spec_for("T", f.donors);
  auto ens = placebo_run(spec, f.panel, KeyedTable{});
  REQUIRE(ens.entries.size() == 10);
  CHECK(ens.treated_entry().unit == UnitId("T"));
  CHECK(std::is_sorted(ens.entries.begin(), ens.entries.end(),
                       [](const PlaceboEntry& a, const PlaceboEntry& b) { return a.unit < b.unit; }));
  for (const auto& e : ens.entries) {
    CHECK_FALSE(e.skipped);
    CHECK(e.pre_length == kPre);
    CHECK(e.rmse_pre >= 0.0);
    CHECK(e.rmse_post >= 0.0);
  }
  const double p = p_value(ens);
  CHECK(p >= 0.0);
  CHECK(p <= 0.9);
  CHECK(p * 10 == std::round(p * 10));
}

TEST_CASE("placebo_run: placebo T0 override") {
  auto f = ten_units();
  PlaceboOptions opts;
  opts.placebo_pre_length = 50;
  auto ens = placebo_run(spec_for("T", f.donors), f.panel, KeyedTable{}, opts);
  for (const auto& e : ens.entries) CHECK(e.pre_length == (e.unit == UnitId("T") ? kPre : 50));
}

TEST_CASE("placebo_run: the result does not depend on parallelism") {
  auto f = ten_units();
  auto spec = spec_for("T", f.donors);
  PlaceboOptions one, four;
  four.parallelism = 4;
  auto a = placebo_run(spec, f.panel, KeyedTable{}, one);
  auto b = placebo_run(spec, f.panel, KeyedTable{}, four);
  REQUIRE(a.entries.size() == b.entries.size());
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    CHECK(a.entries[i].unit == b.entries[i].unit);
    CHECK(a.entries[i].r == b.entries[i].r);
  }
}

TEST_CASE("placebo_run: a large post-period shift gives p = 0") {
  auto f = ten_units(5.0);
  auto ens = placebo_run(spec_for("T", f.donors), f.panel, KeyedTable{});
  CHECK(p_value(ens) == 0.0);
}

TEST_CASE("placebo_run: failed placebo fits are recorded as skipped") {
  // "c" is constant over the donors but not over the treated unit, so only the
  // placebo fits hit a zero-variance predictor.
  std::vector<std::string> codes{"T", "A", "B", "C"};
  auto panel = fixtures::make_panel(codes, {wiggle(3, 0), wiggle(1, 1), wiggle(2, 2), wiggle(5, 3)});
  auto table = fixtures::make_table({"c"}, codes, {{2.0}, {1.0}, {1.0}, {1.0}});
  auto spec = spec_for("T", {"A", "B", "C"});
  spec.v_mode = VMode::inverse_variance;
  auto ens = placebo_run(spec, panel, table);
  REQUIRE(ens.entries.size() == 4);
  for (const auto& e : ens.entries) {
    if (e.unit == UnitId("T")) {
      CHECK_FALSE(e.skipped);
    } else {
      CHECK(e.skipped);
      CHECK_FALSE(e.skip_reason.empty());
    }
  }
  CHECK(p_value(ens) == 0.0);
}

TEST_CASE("placebo_run: errors") {
  auto f = ten_units();
  CHECK(code_of([&] { placebo_run(spec_for("T", {"D0"}), f.panel, KeyedTable{}); }) == ErrorCode::TooFewUnits);
  auto spec = spec_for("T", f.donors);
  spec.pre_length = kDays;
  spec.t_fit = 10;
  CHECK(code_of([&] { placebo_run(spec, f.panel, KeyedTable{}); }) == ErrorCode::EmptyWindow);
}

TEST_CASE("training_sweep: one sorted row per training length") {
  auto f = ten_units();
  std::vector<int> t_fits{50, 10, 30, 20, 40};
  auto rows = training_sweep(spec_for("T", f.donors), t_fits, f.panel, KeyedTable{});
  REQUIRE(rows.size() == 5);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].t_fit == 10 * static_cast<int>(i + 1));
    CHECK_FALSE(rows[i].failed);
    CHECK(rows[i].p_value >= 0.0);
  }
  std::vector<int> bad{10, kPre};
  CHECK(code_of([&] { training_sweep(spec_for("T", f.donors), bad, f.panel, KeyedTable{}); }) ==
        ErrorCode::InvalidSplit);
}

TEST_CASE("training_sweep: identity donor fits perfectly at every length") {
  auto y = wiggle(10.0, 0.4);
  auto panel = fixtures::make_panel({"T", "CP", "X", "Y"}, {y, y, wiggle(4.0, 1.0), wiggle(20.0, 2.0)});
  auto table = fixtures::make_table({"p1", "p2"}, {"T", "CP", "X", "Y"}, {{1, 2}, {1, 2}, {5, -3}, {-4, 6}});
  std::vector<int> t_fits{10, 20, 30, 40, 50};
  for (const auto& row : training_sweep(spec_for("T", {"CP", "X", "Y"}), t_fits, panel, table)) {
    CHECK_FALSE(row.failed);
    CHECK(row.pre_deviation < 1e-9);
  }
}

TEST_CASE("training_sweep: the tail-only fixture favours ten training days") {
  // All donors share the same path except over the last 10 pre-period days,
  // where A sits highest. The treated unit follows A there and runs 1 below the
  // shared path before.
  const std::vector<double> offsets{3.0, 1.0, -1.0, -2.0};
  const std::vector<std::string> donors{"A", "B", "C", "D"};
  std::vector<std::vector<double>> rows;
  auto base = wiggle(10.0, 0.0);
  std::vector<double> treated = base;
  for (int t = 0; t < kPre - 10; ++t) treated[t] -= 1.0;
  for (int t = kPre - 10; t < kDays; ++t) treated[t] += offsets[0];
  rows.push_back(treated);
  for (double off : offsets) {
    auto y = base;
    for (int t = kPre - 10; t < kDays; ++t) y[t] += off;
    rows.push_back(y);
  }
  auto panel = fixtures::make_panel({"T", "A", "B", "C", "D"}, rows);
  std::vector<int> t_fits{10, 20, 30, 40, 50};
  auto out = training_sweep(spec_for("T", donors), t_fits, panel, KeyedTable{});
  REQUIRE(out.size() == 5);
  CHECK(out[0].pre_deviation == doctest::Approx(50.0).epsilon(1e-9));
  for (std::size_t i = 1; i < out.size(); ++i) {
    CAPTURE(out[i].t_fit);
    CHECK_FALSE(out[i].failed);
    CHECK(out[i].pre_deviation > out[0].pre_deviation);
  }
}
