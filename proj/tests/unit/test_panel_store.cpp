#include "doctest.h"

#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "synthctl/error.hpp"
#include "synthctl/panel_store.hpp"

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

Panel ingest(const std::string& text) {
  std::istringstream in(text);
  return ingest_panel(in);
}

}  // namespace

TEST_CASE("UnitId validation") {
  CHECK(UnitId("OH").code() == "OH");
  CHECK(UnitId("39061").is_fips());
  CHECK_FALSE(UnitId("OH").is_fips());
  CHECK_THROWS_AS(UnitId(""), Error);
  CHECK_THROWS_AS(UnitId("3906"), Error);
  CHECK_THROWS_AS(UnitId("390611"), Error);
}

TEST_CASE("ingest_panel: full 2x3 grid") {
  auto p = ingest("unit,date,value\nOH,2021-05-10,1\nOH,2021-05-11,2\nOH,2021-05-12,3\n"
                  "PA,2021-05-10,4\nPA,2021-05-11,5\nPA,2021-05-12,6\n");
  REQUIRE(p.num_units() == 2);
  REQUIRE(p.num_days() == 3);
  CHECK(p.first_date().to_string() == "2021-05-10");
  CHECK(p.at(0, 0) == 1.0);
  CHECK(p.at(1, 2) == 6.0);
  CHECK(p.row(UnitId("PA"))[1] == 5.0);
  CHECK(p.day_index(Date::parse("2021-05-12")) == 2);
  CHECK_FALSE(p.day_index(Date::parse("2021-05-13")).has_value());
}

TEST_CASE("ingest_panel: a missing day is flagged, not zero") {
  auto p = ingest("unit,date,value\nA,2021-05-10,1\nA,2021-05-11,2\nA,2021-05-12,3\nB,2021-05-10,4\nB,2021-05-12,6\n");
  REQUIRE(p.num_days() == 3);
  CHECK(std::isnan(p.at(1, 1)));
  int missing = 0;
  for (std::size_t u = 0; u < 2; ++u) {
    for (int t = 0; t < 3; ++t) missing += std::isnan(p.at(u, t));
  }
  CHECK(missing == 1);
}

TEST_CASE("ingest_panel: errors") {
  CHECK(code_of([] { ingest("unit,date,value\nOH,2021-05-12,38.2\nOH,2021-05-12,38.2\n"); }) ==
        ErrorCode::DuplicateCell);
  CHECK(code_of([] { ingest("unit,date,value\nOH,12/05/2021,38.2\n"); }) == ErrorCode::UnparseableDate);
  CHECK(code_of([] { ingest(""); }) == ErrorCode::EmptyFile);
  CHECK(code_of([] { ingest("unit,date,value\n"); }) == ErrorCode::EmptyFile);
  CHECK(code_of([] { ingest_panel(std::filesystem::path("/nonexistent/outcomes.csv")); }) == ErrorCode::Io);
}

TEST_CASE("ingest_panel: custom column names and round trip through write_panel") {
  std::istringstream in("fips,day,rate\n39061,2021-05-10,1.5\n39061,2021-05-11,\n");
  auto p = ingest_panel(in, LongSchema{"fips", "day", "rate"});
  CHECK(p.units()[0].code() == "39061");
  CHECK(std::isnan(p.at(0, 1)));
  std::ostringstream out;
  write_panel(out, p);
  auto back = ingest(out.str());
  CHECK(back.at(0, 0) == 1.5);
  CHECK(std::isnan(back.at(0, 1)));
}

TEST_CASE("metadata attaches to units and treated t0 must lie in range") {
  auto p = fixtures::make_panel({"OH", "PA"}, {{1, 2, 3}, {4, 5, 6}});
  std::istringstream in("unit,treated,t0,cluster,incentive_category\nOH,1,2021-02-20,,3\nPA,0,,Big Cities,\n");
  auto meta = read_metadata(in);
  auto q = p.with_metadata(meta);
  CHECK(q.meta(UnitId("OH")).treated);
  CHECK(q.meta(UnitId("OH")).t0 == Date::parse("2021-02-20"));
  CHECK(q.meta(UnitId("OH")).incentive_category == 3);
  CHECK(q.meta(UnitId("PA")).cluster == "Big Cities");

  meta[UnitId("OH")].t0 = Date::parse("2022-01-01");
  CHECK(code_of([&] { p.with_metadata(meta); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("join_on_key") {
  auto a = fixtures::make_table({"x"}, {"A", "B", "C"}, {{1}, {2}, {3}});
  auto b = fixtures::make_table({"y"}, {"B", "C", "D"}, {{20}, {30}, {40}});
  std::vector<KeyedTable> ab{a, b};
  auto j = join_on_key(ab);
  CHECK(j.joined.units == to_unit_ids({"B", "C"}));
  CHECK(j.dropped == to_unit_ids({"A", "D"}));
  CHECK(j.joined.columns == std::vector<std::string>{"x", "y"});
  CHECK(j.joined.row(UnitId("C")) == std::vector<double>{3, 30});

  std::vector<KeyedTable> aa{a, fixtures::make_table({"z"}, {"C", "A", "B"}, {{0}, {0}, {0}})};
  CHECK(join_on_key(aa).dropped.empty());
  CHECK(join_on_key(aa).joined.units.size() == 3);

  std::vector<KeyedTable> disjoint{a, fixtures::make_table({"y"}, {"D"}, {{1}})};
  CHECK(code_of([&] { join_on_key(disjoint); }) == ErrorCode::EmptyIntersection);
}

TEST_CASE("join_on_key: a joined table joined with itself is unchanged") {
  auto a = fixtures::make_table({"x"}, {"A", "B", "C"}, {{1}, {2}, {3}});
  auto b = fixtures::make_table({"y"}, {"B", "C", "D"}, {{20}, {30}, {40}});
  std::vector<KeyedTable> ab{a, b};
  auto j = join_on_key(ab).joined;
  std::vector<KeyedTable> one{j};
  auto again = join_on_key(one);
  CHECK(again.joined.units == j.units);
  CHECK(again.joined.rows == j.rows);
  CHECK(again.dropped.empty());
}

TEST_CASE("join_on_key: county-scale reconciliation keeps the common FIPS codes") {
  std::vector<std::string> all;
  for (int i = 0; i < 3141; ++i) all.push_back(fmt::format("{:05d}", 1001 + i));
  std::vector<std::string> most(all.begin() + 10, all.end());
  KeyedTable a = fixtures::make_table({"x"}, all, std::vector<std::vector<double>>(all.size(), {1.0}));
  KeyedTable b = fixtures::make_table({"y"}, most, std::vector<std::vector<double>>(most.size(), {2.0}));
  std::vector<KeyedTable> ab{a, b};
  auto j = join_on_key(ab);
  CHECK(j.joined.units.size() == 3131);
  CHECK(j.dropped.size() == 10);
}

TEST_CASE("common_units and restricted_to") {
  auto p = fixtures::make_panel({"A", "B", "C"}, {{1}, {2}, {3}});
  auto t = fixtures::make_table({"x"}, {"C", "A"}, {{0}, {0}});
  std::vector<KeyedTable> ts{t};
  auto keep = common_units(p, ts);
  CHECK(keep == to_unit_ids({"A", "C"}));
  auto r = p.restricted_to(keep);
  CHECK(r.num_units() == 2);
  CHECK(r.row(UnitId("C"))[0] == 3.0);
}

TEST_CASE("interpolate_missing: linear ramp with a hole") {
  const std::vector<double> ramp{0, 10, 20, kMissing, 40, 50};
  CHECK(interpolate_missing(ramp) == std::vector<double>{0, 10, 20, 30, 40, 50});
  CHECK(repair_series(ramp, RepairMode::interpolate) == std::vector<double>{0, 10, 20, 30, 40, 50});
  CHECK(interpolate_missing(std::vector<double>{kMissing, 2, kMissing}) == std::vector<double>{2, 2, 2});
  CHECK(code_of([] { interpolate_missing(std::vector<double>{kMissing, kMissing}); }) == ErrorCode::AllMissing);
}

TEST_CASE("interpolate_missing: deleting interior points of a line restores it") {
  SplitMix64 g(3);
  for (int trial = 0; trial < 200; ++trial) {
    const double a = 10.0 * g.normal(), b = g.normal();
    std::vector<double> line(60), holed(60);
    for (int t = 0; t < 60; ++t) line[t] = holed[t] = a + b * t;
    const int k = 1 + static_cast<int>(g.uniform() * 20);
    for (int i = 0; i < k; ++i) holed[1 + static_cast<int>(g.uniform() * 58)] = kMissing;
    auto back = interpolate_missing(holed);
    for (int t = 0; t < 60; ++t) CHECK(back[t] == doctest::Approx(line[t]).epsilon(1e-12).scale(1.0));
  }
}

TEST_CASE("clean_series: examples") {
  CleaningPolicy policy;
  const std::vector<double> flat(8, 5.0);
  auto c = clean_series(flat, policy);
  CHECK_FALSE(c.dropped);
  CHECK(c.values == flat);

  // 10 cells from the first positive value, 6 of them zero.
  const std::vector<double> zeros{0, 3, 0, 0, 4, 0, 0, 0, 5, 0, 7};
  auto d = clean_series(zeros, policy);
  CHECK(d.dropped);
  CHECK(d.bad_fraction == doctest::Approx(0.6));
  CHECK(d.values.empty());

  CHECK(code_of([] { clean_series(std::vector<double>{kMissing, kMissing}); }) == ErrorCode::AllMissing);
}

TEST_CASE("clean_series: drop rule boundary at exactly 10 percent") {
  CleaningPolicy policy;
  std::vector<double> s(20);
  for (int t = 0; t < 20; ++t) s[t] = 1.0 + t;
  s[5] = kMissing;
  s[11] = 0.0;
  CHECK(bad_fraction(s) == 0.1);
  CHECK_FALSE(clean_series(s, policy).dropped);
  s[14] = kMissing;
  CHECK(bad_fraction(s) == doctest::Approx(0.15));
  CHECK(clean_series(s, policy).dropped);
}

TEST_CASE("clean_series: zeros before the first positive value are not bad") {
  std::vector<double> s{0, 0, 0, 0, 1, 2, 3, 4, 5, 6};
  CHECK(bad_fraction(s) == 0.0);
  CHECK(bad_fraction(std::vector<double>{0, 0}) == 0.0);
}

TEST_CASE("clean_series: idempotent without smoothing") {
  SplitMix64 g(9);
  CleaningPolicy policy;
  policy.window = 1;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s(40);
    double level = 0.5;
    int holes = 0;
    for (auto& x : s) {
      level += g.uniform();
      const bool hole = holes < 4 && g.uniform() < 0.1;
      holes += hole;
      x = hole ? kMissing : level;
    }
    auto once = clean_series(s, policy);
    REQUIRE_FALSE(once.dropped);
    auto twice = clean_series(once.values, policy);
    CHECK(twice.values == once.values);
    for (auto mode : {RepairMode::interpolate, RepairMode::cumulative_max, RepairMode::both}) {
      auto r = repair_series(s, mode);
      CHECK(repair_series(r, mode) == r);
    }
  }
}

TEST_CASE("rolling_mean: trailing window") {
  CHECK(rolling_mean(std::vector<double>{1, 2, 3, 4}, 2) == std::vector<double>{1, 1.5, 2.5, 3.5});
  CHECK(rolling_mean(std::vector<double>{7, 1}, 7) == std::vector<double>{7, 4});
  CHECK(code_of([] { rolling_mean(std::vector<double>{1}, 0); }) == ErrorCode::InvalidArgument);

  SplitMix64 g(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s(30);
    for (auto& x : s) x = 10.0 * g.normal();
    auto m = rolling_mean(s, 7);
    const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
    for (double x : m) {
      CHECK(x <= *hi + 1e-12);
      CHECK(x >= *lo - 1e-12);
    }
  }
}

TEST_CASE("enforce_monotone") {
  CHECK(enforce_monotone(std::vector<double>{1, 2, 1.5, 3}) == std::vector<double>{1, 2, 2, 3});
  CHECK(enforce_monotone(std::vector<double>{5, 0, 0, 6}) == std::vector<double>{5, 5, 5, 6});
  const std::vector<double> up{0, 1, 1, 2, 9};
  CHECK(enforce_monotone(up) == up);
}

TEST_CASE("enforce_monotone: fuzz against a running-max oracle") {
  SplitMix64 g(77);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> s(1 + trial % 50);
    for (auto& x : s) x = g.normal();
    auto out = enforce_monotone(s);
    CHECK(out == oracle::running_max(s));
    for (std::size_t t = 1; t < out.size(); ++t) CHECK(out[t] >= out[t - 1]);
    for (std::size_t t = 0; t < out.size(); ++t) CHECK(out[t] >= s[t]);
    CHECK(enforce_monotone(out) == out);
  }
}

TEST_CASE("clean_panel drops bad units and reports them") {
  auto p = fixtures::make_panel({"A", "B", "C"},
                                {{1, 2, 3, 4, 5}, {1, 0, 0, 0, 5}, {kMissing, kMissing, kMissing, kMissing, kMissing}});
  CleanPanelReport report;
  auto q = clean_panel(p, {}, &report);
  CHECK(q.units() == to_unit_ids({"A"}));
  CHECK(report.dropped == to_unit_ids({"B", "C"}));
  CHECK(report.dropped_bad_fraction[0] == doctest::Approx(0.6));
}

TEST_CASE("age_band_rate") {
  AgeBandCounts raw;
  raw.first_dose = {Series{200, 200}, Series{100, 100}, Series{40, 40}};
  raw.complete = {Series{150, 150}, Series{80, 90}, Series{30, 30}};
  raw.population = {1500, 1000, 200};

  auto band = age_band_rate(raw, 18, 65, VaxScheme::first_dose);
  CHECK(band[0] == doctest::Approx(7.5));
  CHECK(band[1] == doctest::Approx(7.5));

  auto adults = age_band_rate(raw, 18, std::nullopt, VaxScheme::complete);
  CHECK(adults == Series{8.0, 9.0});

  auto teens = age_band_rate(raw, 12, 18, VaxScheme::first_dose);
  CHECK(teens[0] == doctest::Approx(100.0 * 100 / 500));
}

TEST_CASE("age_band_rate: repairs bands before subtracting") {
  AgeBandCounts raw;
  // A reporting dip in the 18+ series would make 18-64 negative without repair.
  raw.first_dose = {Series{0, 0, 0}, Series{100, 30, 110}, Series{40, 40, 45}};
  raw.population = {1, 1000, 200};
  auto band = age_band_rate(raw, 18, 65, VaxScheme::first_dose);
  CHECK(band[1] == doctest::Approx(100.0 * 60 / 800));
}

TEST_CASE("age_band_rate: errors") {
  AgeBandCounts raw;
  raw.first_dose = {Series{1, 1}, Series{100, 100}, Series{120, 120}};
  raw.population = {1500, 1000, 200};
  CHECK(code_of([&] { age_band_rate(raw, 18, 65, VaxScheme::first_dose); }) == ErrorCode::NegativeDerivedCount);
  raw.population = {1500, 1000, 1000};
  CHECK(code_of([&] { age_band_rate(raw, 18, 65, VaxScheme::first_dose); }) == ErrorCode::NonPositivePopulation);
  raw.population = {1500, 0, 200};
  CHECK(code_of([&] { age_band_rate(raw, 18, std::nullopt, VaxScheme::first_dose); }) ==
        ErrorCode::NonPositivePopulation);
  CHECK(code_of([&] { age_band_rate(raw, 20, std::nullopt, VaxScheme::first_dose); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { age_band_rate(raw, 65, 18, VaxScheme::first_dose); }) == ErrorCode::InvalidArgument);
}
