#include "synthctl/donor_pool.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "synthctl/csv.hpp"
#include "synthctl/error.hpp"

namespace synthctl {

void PredictorBlocks::validate(std::span<const std::string> known_predictors) const {
  std::set<std::string> known(known_predictors.begin(), known_predictors.end());
  std::set<std::string> used;
  for (const auto& [name, members] : blocks) {
    if (members.empty()) throw Error(ErrorCode::EmptyBlock, fmt::format("block '{}' has no predictors", name));
    for (const auto& m : members) {
      if (!known.count(m)) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("block '{}' lists unknown predictor '{}'", name, m));
      }
      if (!used.insert(m).second) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("predictor '{}' is in more than one block", m));
      }
    }
  }
}

PredictorBlocks read_blocks(const std::filesystem::path& path) {
  csv::Table t = csv::read_file(path);
  const std::size_t cb = t.column("block");
  const std::size_t cp = t.column("predictor");
  PredictorBlocks out;
  for (const auto& row : t.rows) {
    auto it = std::find_if(out.blocks.begin(), out.blocks.end(), [&](const auto& b) { return b.first == row[cb]; });
    if (it == out.blocks.end()) {
      out.blocks.emplace_back(row[cb], std::vector<std::string>{});
      it = std::prev(out.blocks.end());
    }
    it->second.push_back(row[cp]);
  }
  return out;
}

std::size_t CorrelationMatrix::index(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  throw Error(ErrorCode::InvalidArgument, fmt::format("no predictor named '{}' in the correlation matrix", name));
}

CorrelationMatrix abs_correlation(const KeyedTable& predictors) {
  const std::size_t k = predictors.columns.size();
  CorrelationMatrix out;
  out.names = predictors.columns;
  out.abs = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      double n = 0, sa = 0, sb = 0;
      for (const auto& row : predictors.rows) {
        if (!std::isfinite(row[a]) || !std::isfinite(row[b])) continue;
        n += 1;
        sa += row[a];
        sb += row[b];
      }
      double c = 0.0;
      if (n >= 2) {
        const double ma = sa / n, mb = sb / n;
        double saa = 0, sbb = 0, sab = 0;
        for (const auto& row : predictors.rows) {
          if (!std::isfinite(row[a]) || !std::isfinite(row[b])) continue;
          saa += (row[a] - ma) * (row[a] - ma);
          sbb += (row[b] - mb) * (row[b] - mb);
          sab += (row[a] - ma) * (row[b] - mb);
        }
        if (saa > 0.0 && sbb > 0.0) c = std::min(1.0, std::abs(sab) / std::sqrt(saa * sbb));
      }
      const auto ia = static_cast<Eigen::Index>(a), ib = static_cast<Eigen::Index>(b);
      out.abs(ia, ib) = out.abs(ib, ia) = c;
    }
  }
  return out;
}

PredictorSelection select_predictors_naive(const CorrelationMatrix& corr, const PredictorBlocks& blocks,
                                           double threshold, int per_block) {
  if (per_block < 1) throw Error(ErrorCode::InvalidArgument, "per_block must be >= 1");
  blocks.validate(corr.names);
  PredictorSelection out;
  for (const auto& [name, members] : blocks.blocks) {
    std::vector<Eigen::Index> idx;
    for (const auto& m : members) idx.push_back(static_cast<Eigen::Index>(corr.index(m)));

    std::vector<double> mean_abs(idx.size(), 0.0);
    if (idx.size() > 1) {
      for (std::size_t i = 0; i < idx.size(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < idx.size(); ++j) {
          if (j != i) s += corr.abs(idx[i], idx[j]);
        }
        mean_abs[i] = s / static_cast<double>(idx.size() - 1);
      }
    }

    std::vector<std::size_t> survivors(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) survivors[i] = i;
    int picks = 0;
    while (picks < per_block && !survivors.empty()) {
      std::size_t best = survivors.front();
      for (std::size_t s : survivors) {
        if (mean_abs[s] > mean_abs[best]) best = s;
      }
      out.selected.push_back(members[best]);
      ++picks;
      std::erase_if(survivors, [&](std::size_t s) { return s == best || corr.abs(idx[s], idx[best]) > threshold; });
    }
    if (picks < per_block && members.size() > 1) out.short_blocks.push_back(name);
  }
  return out;
}

bool is_cluster_label(std::string_view label) {
  return std::find(kClusterLabels.begin(), kClusterLabels.end(), label) != kClusterLabels.end();
}

ClusterMap::ClusterMap(std::map<UnitId, std::string> assignment) : assignment_(std::move(assignment)) {
  for (const auto& [id, label] : assignment_) {
    if (!is_cluster_label(label)) {
      throw Error(ErrorCode::UnknownClusterLabel, fmt::format("unit '{}' has unknown cluster '{}'", id.code(), label));
    }
  }
}

std::optional<std::string> ClusterMap::label(const UnitId& id) const {
  auto it = assignment_.find(id);
  if (it == assignment_.end()) return std::nullopt;
  return it->second;
}

ClusterMap read_clusters(const std::filesystem::path& path) {
  csv::Table t = csv::read_file(path);
  const std::size_t cf = t.column("fips");
  const std::size_t cc = t.column("cluster");
  std::map<UnitId, std::string> m;
  for (const auto& row : t.rows) {
    if (!m.emplace(UnitId(row[cf]), row[cc]).second) {
      throw Error(ErrorCode::DuplicateCell, fmt::format("{}: unit '{}' appears twice", t.source, row[cf]));
    }
  }
  return ClusterMap(std::move(m));
}

ClusterMap clusters_from_metadata(const MetadataTable& meta) {
  std::map<UnitId, std::string> m;
  for (const auto& [id, um] : meta) {
    if (um.cluster) m.emplace(id, *um.cluster);
  }
  return ClusterMap(std::move(m));
}

std::vector<UnitId> filter_by_cluster(const UnitId& target, std::span<const UnitId> candidates,
                                      const ClusterMap& clusters) {
  const auto label = clusters.label(target);
  if (!label) throw Error(ErrorCode::UnlabeledUnit, fmt::format("unit '{}' has no cluster label", target.code()));
  std::vector<UnitId> out;
  for (const auto& c : candidates) {
    if (c != target && clusters.label(c) == label) out.push_back(c);
  }
  return out;
}

StateAdjacency read_adjacency(const std::filesystem::path& path) {
  csv::Table t = csv::read_file(path);
  const std::size_t cs = t.column("state");
  const std::size_t cn = t.column("neighbor");
  StateAdjacency out;
  for (const auto& row : t.rows) {
    auto& list = out[row[cs]];
    if (!row[cn].empty()) list.push_back(row[cn]);
  }
  return out;
}

namespace {

constexpr std::array<std::pair<std::string_view, std::string_view>, 52> kStateFips{{
    {"01", "AL"}, {"02", "AK"}, {"04", "AZ"}, {"05", "AR"}, {"06", "CA"}, {"08", "CO"}, {"09", "CT"},
    {"10", "DE"}, {"11", "DC"}, {"12", "FL"}, {"13", "GA"}, {"15", "HI"}, {"16", "ID"}, {"17", "IL"},
    {"18", "IN"}, {"19", "IA"}, {"20", "KS"}, {"21", "KY"}, {"22", "LA"}, {"23", "ME"}, {"24", "MD"},
    {"25", "MA"}, {"26", "MI"}, {"27", "MN"}, {"28", "MS"}, {"29", "MO"}, {"30", "MT"}, {"31", "NE"},
    {"32", "NV"}, {"33", "NH"}, {"34", "NJ"}, {"35", "NM"}, {"36", "NY"}, {"37", "NC"}, {"38", "ND"},
    {"39", "OH"}, {"40", "OK"}, {"41", "OR"}, {"42", "PA"}, {"44", "RI"}, {"45", "SC"}, {"46", "SD"},
    {"47", "TN"}, {"48", "TX"}, {"49", "UT"}, {"50", "VT"}, {"51", "VA"}, {"53", "WA"}, {"54", "WV"},
    {"55", "WI"}, {"56", "WY"}, {"72", "PR"},
}};

// State key used to group units; codes that are neither states nor FIPS
// counties form a group of their own.
std::string state_key(const UnitId& unit) {
  try {
    return state_of(unit);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::UnknownState) throw;
    return unit.code();
  }
}

}  // namespace

std::string state_of(const UnitId& unit) {
  const std::string& code = unit.code();
  if (unit.is_fips()) {
    const std::string_view prefix(code.data(), 2);
    for (const auto& [fips, postal] : kStateFips) {
      if (fips == prefix) return std::string(postal);
    }
    throw Error(ErrorCode::UnknownState, fmt::format("FIPS '{}' has no known state prefix", code));
  }
  for (const auto& [fips, postal] : kStateFips) {
    if (postal == code) return code;
  }
  throw Error(ErrorCode::UnknownState, fmt::format("'{}' is neither a state code nor a county FIPS code", code));
}

std::vector<UnitId> filter_by_neighbor_states(const UnitId& target, std::span<const UnitId> candidates,
                                              const StateAdjacency& adjacency) {
  const std::string home = state_of(target);
  auto it = adjacency.find(home);
  if (it == adjacency.end()) throw Error(ErrorCode::UnknownState, fmt::format("no adjacency entry for '{}'", home));
  const std::set<std::string> neighbors(it->second.begin(), it->second.end());
  std::vector<UnitId> out;
  for (const auto& c : candidates) {
    const std::string s = state_key(c);
    if (s != home && neighbors.count(s)) out.push_back(c);
  }
  return out;
}

std::vector<UnitId> filter_donors(const UnitId& target, std::span<const UnitId> candidates, DonorFilter filter,
                                  const ClusterMap* clusters, const StateAdjacency* adjacency,
                                  std::vector<std::string>* warnings) {
  std::vector<UnitId> all;
  for (const auto& c : candidates) {
    if (c != target) all.push_back(c);
  }
  switch (filter) {
    case DonorFilter::none:
      return all;
    case DonorFilter::cluster: {
      if (!clusters) throw Error(ErrorCode::InvalidArgument, "cluster filter needs a cluster map");
      auto kept = filter_by_cluster(target, all, *clusters);
      if (kept.empty()) {
        if (warnings) {
          warnings->push_back(fmt::format("no candidate shares the cluster of '{}'; using all {} candidates",
                                          target.code(), all.size()));
        }
        return all;
      }
      return kept;
    }
    case DonorFilter::neighbors:
      if (!adjacency) throw Error(ErrorCode::InvalidArgument, "neighbor filter needs an adjacency map");
      return filter_by_neighbor_states(target, all, *adjacency);
  }
  return all;
}

ControlTargetSplit split_control_target(const Panel& panel) {
  std::set<std::string> treated_states;
  for (std::size_t u = 0; u < panel.num_units(); ++u) {
    if (panel.meta(u).treated) treated_states.insert(state_key(panel.units()[u]));
  }
  ControlTargetSplit out;
  for (const auto& id : panel.units()) {
    (treated_states.count(state_key(id)) ? out.target : out.control).push_back(id);
  }
  return out;
}

std::vector<std::string> reconcile_split(const ControlTargetSplit& split, std::optional<std::size_t> expected_total,
                                         std::optional<std::size_t> expected_control,
                                         std::optional<std::size_t> expected_target) {
  std::vector<std::string> issues;
  const std::size_t total = split.control.size() + split.target.size();
  if (expected_total && *expected_total != total) {
    issues.push_back(fmt::format("split covers {} units, expected {}", total, *expected_total));
  }
  if (expected_control && *expected_control != split.control.size()) {
    issues.push_back(fmt::format("{} control units, expected {}", split.control.size(), *expected_control));
  }
  if (expected_target && *expected_target != split.target.size()) {
    issues.push_back(fmt::format("{} target units, expected {}", split.target.size(), *expected_target));
  }
  if (expected_control && expected_target && expected_total && *expected_control + *expected_target != *expected_total) {
    issues.push_back(fmt::format("expected counts are inconsistent: {} + {} != {}", *expected_control,
                                 *expected_target, *expected_total));
  }
  return issues;
}

}  // namespace synthctl
