#pragma once

#include "wlclean/dataset.hpp"
#include "wlclean/embed.hpp"

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace wlclean {

enum class ComponentRule {
    anchor,   // component holding the max-degree node
    largest,  // largest component, ties to the lowest min record_id
};

[[nodiscard]] ComponentRule parse_component_rule(const std::string& s);
[[nodiscard]] std::string to_string(ComponentRule rule);

struct CleanParams {
    double threshold = 0.0;
    std::size_t min_group_size = 1;
    ComponentRule component_rule = ComponentRule::anchor;

    /// Throws ConfigError. Thresholds above 2 are allowed and all mean "link
    /// every pair" for unit vectors.
    void validate() const;
};

/// Match graph of one identity: edge (i, j) iff distance < threshold, i != j.
struct IdentityGraph {
    Label label;
    std::vector<RecordId> nodes;
    std::vector<std::vector<std::size_t>> adjacency;  // sorted neighbour indices
    double threshold = 0.0;

    [[nodiscard]] std::size_t size() const noexcept { return nodes.size(); }
    [[nodiscard]] std::size_t degree(std::size_t i) const { return adjacency.at(i).size(); }
    [[nodiscard]] std::size_t edge_count() const;
    [[nodiscard]] bool has_edge(std::size_t i, std::size_t j) const;

    /// Builds a graph from an explicit undirected edge list. Self-loops and
    /// duplicate edges are rejected.
    [[nodiscard]] static IdentityGraph from_edges(Label label, std::vector<RecordId> nodes,
                                                  const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                                                  double threshold = 0.0);
};

/// Symmetric pairwise distance matrix of one group's embeddings.
struct GroupDistances {
    Label label;
    std::vector<RecordId> ids;
    Matrix dist;

    [[nodiscard]] static GroupDistances compute(const Label& label, std::vector<RecordId> ids,
                                                const Matrix& embeddings);
    [[nodiscard]] IdentityGraph graph(double threshold) const;
};

/// Exact all-pairs thresholded graph over the group `label` of `ds`.
[[nodiscard]] IdentityGraph build_graph(const WeakDataset& ds, const Label& label, const EmbeddingModel& model,
                                        double threshold);

/// Node of maximum degree; ties go to the lowest record_id.
[[nodiscard]] std::size_t find_anchor(const IdentityGraph& g);

/// Record ids of the connected component containing `root`, by breadth-first
/// traversal. This is the fixed point of repeatedly sweeping the remaining
/// records and adding any that match a selected one.
[[nodiscard]] std::set<RecordId> extract_component(const IdentityGraph& g, std::size_t root);

/// Node-index components, each sorted, ordered by their smallest node index.
[[nodiscard]] std::vector<std::vector<std::size_t>> connected_components(const IdentityGraph& g);

/// Per-group diagnostics row.
struct GroupDiagnostics {
    Label label;
    std::size_t group_size = 0;
    std::size_t edge_count = 0;
    std::optional<RecordId> anchor;  // unset for groups under min_group_size
    std::size_t component_size = 0;
    std::size_t second_component_size = 0;
};

struct IdentityResult {
    std::set<RecordId> kept;
    GroupDiagnostics diagnostics;
};

/// Selection step on an already built graph.
[[nodiscard]] IdentityResult clean_graph(const IdentityGraph& g, const CleanParams& params);

/// Cleans one identity group.
[[nodiscard]] std::set<RecordId> clean_identity(const WeakDataset& ds, const Label& label,
                                                const EmbeddingModel& model, const CleanParams& params);

struct CleanOutput {
    CleanedDataset cleaned;
    std::vector<GroupDiagnostics> diagnostics;  // one per group, label order
};

/// Embeddings and distance matrices for every group, computed once so that
/// many thresholds can be evaluated cheaply.
class DistanceCache {
  public:
    DistanceCache(const WeakDataset& ds, const EmbeddingModel& model, std::size_t workers = 1);

    [[nodiscard]] const std::vector<GroupDistances>& groups() const noexcept { return groups_; }

    /// Applies clean_graph to every group. The result does not depend on
    /// `workers`.
    [[nodiscard]] CleanOutput clean(const CleanParams& params, std::size_t workers = 1, int iteration = 0) const;

    /// All within-group pairwise distances, sorted and deduplicated.
    [[nodiscard]] std::vector<double> distinct_distances() const;

  private:
    std::vector<GroupDistances> groups_;
};

[[nodiscard]] CleanOutput clean_dataset_with_diagnostics(const WeakDataset& ds, const EmbeddingModel& model,
                                                         const CleanParams& params, std::size_t workers = 1,
                                                         int iteration = 0);

[[nodiscard]] CleanedDataset clean_dataset(const WeakDataset& ds, const EmbeddingModel& model,
                                           const CleanParams& params, std::size_t workers = 1, int iteration = 0);

void save_diagnostics(const std::vector<GroupDiagnostics>& rows, const std::filesystem::path& path);

}  // namespace wlclean
