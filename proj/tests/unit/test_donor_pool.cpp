#include "doctest.h"

#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "fixtures.hpp"
#include "synthctl/donor_pool.hpp"
#include "synthctl/error.hpp"

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

CorrelationMatrix abc_matrix() {
  CorrelationMatrix c;
  c.names = {"a", "b", "c"};
  c.abs.resize(3, 3);
  c.abs << 1.0, 0.9, 0.2, 0.9, 1.0, 0.3, 0.2, 0.3, 1.0;
  return c;
}

std::set<UnitId> as_set(const std::vector<UnitId>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_CASE("select_predictors_naive: hand-enumerated block") {
  PredictorBlocks blocks{{{"demographic", {"a", "b", "c"}}}};
  auto sel = select_predictors_naive(abc_matrix(), blocks);
  CHECK(sel.selected == std::vector<std::string>{"b", "c"});
  CHECK(sel.short_blocks.empty());
}

TEST_CASE("select_predictors_naive: singleton and fully correlated blocks") {
  PredictorBlocks one{{{"health", {"c"}}}};
  auto s1 = select_predictors_naive(abc_matrix(), one);
  CHECK(s1.selected == std::vector<std::string>{"c"});

  PredictorBlocks pair{{{"economic", {"a", "b"}}}};
  auto s2 = select_predictors_naive(abc_matrix(), pair);
  CHECK(s2.selected.size() == 1);
  CHECK(s2.short_blocks == std::vector<std::string>{"economic"});

  PredictorBlocks empty{{{"ethnic", {}}}};
  CHECK(code_of([&] { select_predictors_naive(abc_matrix(), empty); }) == ErrorCode::EmptyBlock);
  PredictorBlocks unknown{{{"ethnic", {"zz"}}}};
  CHECK_THROWS_AS(select_predictors_naive(abc_matrix(), unknown), Error);
}

TEST_CASE("select_predictors_naive: six blocks of uncorrelated predictors give twelve") {
  const std::vector<std::string> names{"demographic", "ethnic", "education", "economic", "political", "health"};
  SplitMix64 g(6);
  std::vector<std::string> columns;
  PredictorBlocks blocks;
  for (const auto& b : names) {
    std::vector<std::string> members;
    for (int i = 0; i < 3; ++i) {
      members.push_back(b + "_" + std::to_string(i));
      columns.push_back(members.back());
    }
    blocks.blocks.emplace_back(b, members);
  }
  std::vector<std::vector<double>> rows(400, std::vector<double>(columns.size()));
  for (auto& r : rows) {
    for (auto& x : r) x = g.normal();
  }
  std::vector<std::string> units;
  for (int i = 0; i < 400; ++i) units.push_back(fmt::format("{:05d}", 1001 + i));
  auto table = fixtures::make_table(columns, units, rows);
  auto corr = abs_correlation(table);
  auto sel = select_predictors_naive(corr, blocks);
  CHECK(sel.selected.size() == 12);
  CHECK(sel.short_blocks.empty());
  for (const auto& [block, members] : blocks.blocks) {
    std::vector<std::string> picked;
    for (const auto& s : sel.selected) {
      if (std::find(members.begin(), members.end(), s) != members.end()) picked.push_back(s);
    }
    REQUIRE(picked.size() == 2);
    CHECK(corr.abs(corr.index(picked[0]), corr.index(picked[1])) <= 0.4);
  }
}

TEST_CASE("abs_correlation") {
  auto t = fixtures::make_table({"x", "y", "z", "k"}, {"A", "B", "C", "D"},
                                {{1, 2, 4, 7}, {2, 4, 3, 7}, {3, 6, 2, 7}, {4, 8, 1, 7}});
  auto c = abs_correlation(t);
  CHECK(c.abs(0, 1) == doctest::Approx(1.0));
  CHECK(c.abs(0, 2) == doctest::Approx(1.0));
  CHECK(c.abs(0, 3) == 0.0);
  CHECK(c.abs(3, 3) == 1.0);
  CHECK(c.abs == c.abs.transpose());
}

TEST_CASE("PredictorBlocks::validate") {
  const std::vector<std::string> known{"a", "b", "c"};
  PredictorBlocks ok{{{"x", {"a"}}, {"y", {"b", "c"}}}};
  CHECK_NOTHROW(ok.validate(known));
  PredictorBlocks overlap{{{"x", {"a"}}, {"y", {"a", "c"}}}};
  CHECK_THROWS_AS(overlap.validate(known), Error);
  PredictorBlocks missing{{{"x", {"q"}}}};
  CHECK_THROWS_AS(missing.validate(known), Error);
}

TEST_CASE("filter_by_cluster") {
  std::map<UnitId, std::string> assign;
  std::vector<UnitId> candidates;
  int n = 0;
  for (auto label : kClusterLabels) {
    const int copies = label == "Big Cities" ? 3 : 2;
    for (int i = 0; i < copies; ++i) {
      UnitId id(fmt::format("{:05d}", 39001 + 2 * n++));
      assign[id] = std::string(label);
      candidates.push_back(id);
    }
  }
  UnitId target("39999");
  assign[target] = "Big Cities";
  ClusterMap clusters(assign);
  auto kept = filter_by_cluster(target, candidates, clusters);
  CHECK(kept.size() == 3);
  for (const auto& k : kept) CHECK(clusters.label(k) == "Big Cities");

  std::map<UnitId, std::string> lonely{{target, "College Towns"}, {UnitId("39001"), "Exurbs"}};
  ClusterMap lone(lonely);
  std::vector<UnitId> one{UnitId("39001")};
  CHECK(filter_by_cluster(target, one, lone).empty());
  std::vector<std::string> warnings;
  auto fallback = filter_donors(target, one, DonorFilter::cluster, &lone, nullptr, &warnings);
  CHECK(fallback == one);
  CHECK(warnings.size() == 1);

  CHECK(code_of([&] { filter_by_cluster(UnitId("39003"), candidates, lone); }) == ErrorCode::UnlabeledUnit);
  CHECK(code_of([] { ClusterMap bad({{UnitId("39001"), "Suburbia"}}); }) == ErrorCode::UnknownClusterLabel);
  CHECK(is_cluster_label("Rural American Lands"));
  CHECK_FALSE(is_cluster_label("Big City"));
}

TEST_CASE("filter_by_neighbor_states") {
  StateAdjacency adj{{"OH", {"IN", "MI", "PA", "KY", "WV"}}, {"NY", {}}};
  auto candidates = to_unit_ids({"IN", "MI", "PA", "NY", "18001", "42003", "36061", "39035", "54001"});
  auto kept = filter_by_neighbor_states(UnitId("OH"), candidates, adj);
  CHECK(kept == to_unit_ids({"IN", "MI", "PA", "18001", "42003", "54001"}));
  auto county = filter_by_neighbor_states(UnitId("39061"), candidates, adj);
  CHECK(county == kept);
  CHECK(filter_by_neighbor_states(UnitId("NY"), candidates, adj).empty());
  CHECK(code_of([&] { filter_by_neighbor_states(UnitId("TX"), candidates, adj); }) == ErrorCode::UnknownState);
  CHECK(code_of([] { state_of(UnitId("ZZ")); }) == ErrorCode::UnknownState);
  CHECK(state_of(UnitId("39061")) == "OH");
}

TEST_CASE("donor filters are idempotent and commute") {
  StateAdjacency adj{{"OH", {"IN", "PA"}}};
  std::map<UnitId, std::string> assign;
  std::vector<UnitId> candidates;
  const std::vector<std::string> states{"18", "39", "42", "36"};
  for (int i = 0; i < 40; ++i) {
    UnitId id(states[i % 4] + fmt::format("{:03d}", 1 + 2 * i));
    assign[id] = std::string(kClusterLabels[i % 3]);
    candidates.push_back(id);
  }
  UnitId target("39999");
  assign[target] = std::string(kClusterLabels[1]);
  ClusterMap clusters(assign);

  auto by_cluster = filter_by_cluster(target, candidates, clusters);
  auto by_state = filter_by_neighbor_states(target, candidates, adj);
  CHECK(filter_by_cluster(target, by_cluster, clusters) == by_cluster);
  CHECK(filter_by_neighbor_states(target, by_state, adj) == by_state);
  CHECK(filter_by_neighbor_states(target, by_cluster, adj) == filter_by_cluster(target, by_state, clusters));
  CHECK_FALSE(filter_by_neighbor_states(target, by_cluster, adj).empty());
}

TEST_CASE("split_control_target") {
  std::vector<std::string> codes;
  std::vector<std::vector<double>> rows;
  for (const std::string st : {"39", "42", "18"}) {
    for (int c = 0; c < 10; ++c) {
      codes.push_back(st + fmt::format("{:03d}", 1 + 2 * c));
      rows.push_back({1.0, 2.0, 3.0});
    }
  }
  auto panel = fixtures::make_panel(codes, rows);
  auto none = split_control_target(panel);
  CHECK(none.control.size() == 30);
  CHECK(none.target.empty());

  MetadataTable meta;
  meta[UnitId("42005")] = UnitMeta{true, fixtures::day0() + 1, std::nullopt, 2};
  auto split = split_control_target(panel.with_metadata(meta));
  CHECK(split.control.size() == 20);
  CHECK(split.target.size() == 10);
  for (const auto& id : split.target) CHECK(state_of(id) == "PA");

  std::set<UnitId> all = as_set(split.control);
  for (const auto& id : split.target) CHECK(all.insert(id).second);
  CHECK(all.size() == panel.num_units());

  CHECK(reconcile_split(split, 30, 20, 10).empty());
  auto issues = reconcile_split(split, 3131, 2120, 1013);
  CHECK(issues.size() == 4);
}
