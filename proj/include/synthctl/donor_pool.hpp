#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "synthctl/panel_store.hpp"
#include "synthctl/types.hpp"

namespace synthctl {

/// Ordered block -> predictor names (e.g. demographic, ethnic, education,
/// economic, political, health).
struct PredictorBlocks {
  std::vector<std::pair<std::string, std::vector<std::string>>> blocks;

  void validate(std::span<const std::string> known_predictors) const;
};

PredictorBlocks read_blocks(const std::filesystem::path& path);  // CSV block,predictor

/// Absolute correlation matrix with named rows/columns.
struct CorrelationMatrix {
  std::vector<std::string> names;
  Eigen::MatrixXd abs;

  std::size_t index(std::string_view name) const;  // throws InvalidArgument
};

/// |Pearson correlation| between predictor columns across units. Constant
/// columns correlate 0 with everything else.
CorrelationMatrix abs_correlation(const KeyedTable& predictors);

struct PredictorSelection {
  std::vector<std::string> selected;
  std::vector<std::string> short_blocks;  // blocks that had no compliant follow-up pick
};

/// Per block: first pick = highest mean |corr| to the block's other members;
/// members above `threshold` to any pick are removed; repeat until `per_block`
/// picks or no survivors.
PredictorSelection select_predictors_naive(const CorrelationMatrix& corr, const PredictorBlocks& blocks,
                                           double threshold = 0.4, int per_block = 2);

/// The 15 American Communities Project county types.
inline constexpr std::array<std::string_view, 15> kClusterLabels{
    "Exurbs",           "Graying America",       "African American South", "Evangelical Hubs",
    "Working Class Country", "Military Posts",   "Urban Suburbs",          "Hispanic Centers",
    "Native American Lands", "Rural American Lands", "College Towns",      "LDS Enclaves",
    "Aging Farmlands",  "Big Cities",            "Middle Suburbs"};

bool is_cluster_label(std::string_view label);

class ClusterMap {
 public:
  ClusterMap() = default;
  explicit ClusterMap(std::map<UnitId, std::string> assignment);  // throws UnknownClusterLabel

  std::optional<std::string> label(const UnitId& id) const;
  const std::map<UnitId, std::string>& assignment() const { return assignment_; }

 private:
  std::map<UnitId, std::string> assignment_;
};

ClusterMap read_clusters(const std::filesystem::path& path);  // CSV fips,cluster
ClusterMap clusters_from_metadata(const MetadataTable& meta);

std::vector<UnitId> filter_by_cluster(const UnitId& target, std::span<const UnitId> candidates,
                                      const ClusterMap& clusters);

using StateAdjacency = std::map<std::string, std::vector<std::string>>;

StateAdjacency read_adjacency(const std::filesystem::path& path);  // CSV state,neighbor

/// Postal code of a unit: state units map to themselves, county FIPS codes via
/// their 2-digit state prefix. Throws UnknownState.
std::string state_of(const UnitId& unit);

std::vector<UnitId> filter_by_neighbor_states(const UnitId& target, std::span<const UnitId> candidates,
                                              const StateAdjacency& adjacency);

enum class DonorFilter { none, cluster, neighbors };

/// Applies the filter; an empty cluster match falls back to all candidates and
/// appends a warning.
std::vector<UnitId> filter_donors(const UnitId& target, std::span<const UnitId> candidates, DonorFilter filter,
                                  const ClusterMap* clusters, const StateAdjacency* adjacency,
                                  std::vector<std::string>* warnings);

struct ControlTargetSplit {
  std::vector<UnitId> control;
  std::vector<UnitId> target;
};

/// Units in a state containing any treated unit become targets; the rest are controls.
ControlTargetSplit split_control_target(const Panel& panel);

/// Mismatches between a split and externally reported counts, one message each.
std::vector<std::string> reconcile_split(const ControlTargetSplit& split, std::optional<std::size_t> expected_total,
                                         std::optional<std::size_t> expected_control,
                                         std::optional<std::size_t> expected_target);

}  // namespace synthctl
