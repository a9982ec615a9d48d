#include "wlclean/match_graph.hpp"

#include "wlclean/errors.hpp"
#include "io.hpp"
#include "wlclean/parallel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>

namespace wlclean {

ComponentRule parse_component_rule(const std::string& s) {
    if (s == "anchor") return ComponentRule::anchor;
    if (s == "largest") return ComponentRule::largest;
    throw ConfigError("unknown component rule '" + s + "' (expected anchor or largest)");
}

std::string to_string(ComponentRule rule) {
    return rule == ComponentRule::anchor ? "anchor" : "largest";
}

void CleanParams::validate() const {
    if (!(threshold > 0.0) || !std::isfinite(threshold)) {
        throw ConfigError("threshold must be a positive finite number, got " + std::to_string(threshold));
    }
    if (min_group_size < 1) {
        throw ConfigError("min_group_size must be at least 1");
    }
}

std::size_t IdentityGraph::edge_count() const {
    std::size_t twice = 0;
    for (const auto& nbrs : adjacency) twice += nbrs.size();
    return twice / 2;
}

bool IdentityGraph::has_edge(std::size_t i, std::size_t j) const {
    const auto& nbrs = adjacency.at(i);
    return std::binary_search(nbrs.begin(), nbrs.end(), j);
}

IdentityGraph IdentityGraph::from_edges(Label label, std::vector<RecordId> nodes,
                                        const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                                        double threshold) {
    IdentityGraph g;
    g.label = std::move(label);
    g.nodes = std::move(nodes);
    g.threshold = threshold;
    g.adjacency.resize(g.nodes.size());
    for (auto [a, b] : edges) {
        if (a >= g.nodes.size() || b >= g.nodes.size()) throw IntegrityError("edge endpoint out of range");
        if (a == b) throw IntegrityError("self-loop on node " + std::to_string(a));
        g.adjacency[a].push_back(b);
        g.adjacency[b].push_back(a);
    }
    for (auto& nbrs : g.adjacency) {
        std::sort(nbrs.begin(), nbrs.end());
        if (std::adjacent_find(nbrs.begin(), nbrs.end()) != nbrs.end()) {
            throw IntegrityError("duplicate edge");
        }
    }
    return g;
}

GroupDistances GroupDistances::compute(const Label& label, std::vector<RecordId> ids, const Matrix& embeddings) {
    const auto n = static_cast<Eigen::Index>(ids.size());
    if (embeddings.rows() != n) throw DimensionError("embedding rows do not match group size");
    GroupDistances out{label, std::move(ids), Matrix::Zero(n, n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vector a = embeddings.row(i).transpose();
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double d = distance(a, embeddings.row(j).transpose());
            out.dist(i, j) = d;
            out.dist(j, i) = d;
        }
    }
    return out;
}

IdentityGraph GroupDistances::graph(double threshold) const {
    IdentityGraph g;
    g.label = label;
    g.nodes = ids;
    g.threshold = threshold;
    const std::size_t n = ids.size();
    g.adjacency.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j && dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) < threshold) {
                g.adjacency[i].push_back(j);
            }
        }
    }
    return g;
}

IdentityGraph build_graph(const WeakDataset& ds, const Label& label, const EmbeddingModel& model,
                          double threshold) {
    const auto& ids = ds.group(label);
    return GroupDistances::compute(label, ids, embed_records(model, ds, ids)).graph(threshold);
}

std::size_t find_anchor(const IdentityGraph& g) {
    if (g.nodes.empty()) throw IntegrityError("find_anchor on an empty graph");
    std::size_t best = 0;
    for (std::size_t i = 1; i < g.size(); ++i) {
        const auto di = g.degree(i);
        const auto db = g.degree(best);
        if (di > db || (di == db && g.nodes[i] < g.nodes[best])) best = i;
    }
    return best;
}

namespace {

std::vector<std::size_t> bfs(const IdentityGraph& g, std::size_t root, std::vector<char>& seen) {
    std::vector<std::size_t> members{root};
    seen[root] = 1;
    std::deque<std::size_t> frontier{root};
    while (!frontier.empty()) {
        const auto u = frontier.front();
        frontier.pop_front();
        for (auto v : g.adjacency[u]) {
            if (!seen[v]) {
                seen[v] = 1;
                members.push_back(v);
                frontier.push_back(v);
            }
        }
    }
    std::sort(members.begin(), members.end());
    return members;
}

RecordId min_record(const IdentityGraph& g, const std::vector<std::size_t>& comp) {
    RecordId m = g.nodes[comp.front()];
    for (auto i : comp) m = std::min(m, g.nodes[i]);
    return m;
}

}  // namespace

std::set<RecordId> extract_component(const IdentityGraph& g, std::size_t root) {
    if (root >= g.size()) throw IntegrityError("root index out of range");
    std::vector<char> seen(g.size(), 0);
    std::set<RecordId> out;
    for (auto i : bfs(g, root, seen)) out.insert(g.nodes[i]);
    return out;
}

std::vector<std::vector<std::size_t>> connected_components(const IdentityGraph& g) {
    std::vector<char> seen(g.size(), 0);
    std::vector<std::vector<std::size_t>> comps;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!seen[i]) comps.push_back(bfs(g, i, seen));
    }
    return comps;
}

IdentityResult clean_graph(const IdentityGraph& g, const CleanParams& params) {
    IdentityResult result;
    auto& diag = result.diagnostics;
    diag.label = g.label;
    diag.group_size = g.size();
    diag.edge_count = g.edge_count();
    if (g.size() == 0 || g.size() < params.min_group_size) return result;

    const auto anchor = find_anchor(g);
    diag.anchor = g.nodes[anchor];

    auto comps = connected_components(g);
    std::size_t chosen = 0;
    if (params.component_rule == ComponentRule::anchor) {
        for (std::size_t c = 0; c < comps.size(); ++c) {
            if (std::binary_search(comps[c].begin(), comps[c].end(), anchor)) chosen = c;
        }
    } else {
        for (std::size_t c = 1; c < comps.size(); ++c) {
            const auto sc = comps[c].size();
            const auto sb = comps[chosen].size();
            if (sc > sb || (sc == sb && min_record(g, comps[c]) < min_record(g, comps[chosen]))) chosen = c;
        }
    }
    for (auto i : comps[chosen]) result.kept.insert(g.nodes[i]);
    diag.component_size = comps[chosen].size();
    for (std::size_t c = 0; c < comps.size(); ++c) {
        if (c != chosen) diag.second_component_size = std::max(diag.second_component_size, comps[c].size());
    }
    return result;
}

std::set<RecordId> clean_identity(const WeakDataset& ds, const Label& label, const EmbeddingModel& model,
                                  const CleanParams& params) {
    params.validate();
    if (ds.group(label).size() < params.min_group_size) return {};
    return clean_graph(build_graph(ds, label, model, params.threshold), params).kept;
}

DistanceCache::DistanceCache(const WeakDataset& ds, const EmbeddingModel& model, std::size_t workers) {
    const auto labels = ds.labels();
    groups_.resize(labels.size());
    parallel_for(labels.size(), workers, [&](std::size_t i) {
        const auto& ids = ds.group(labels[i]);
        groups_[i] = GroupDistances::compute(labels[i], ids, embed_records(model, ds, ids));
    });
}

CleanOutput DistanceCache::clean(const CleanParams& params, std::size_t workers, int iteration) const {
    params.validate();
    std::vector<IdentityResult> results(groups_.size());
    parallel_for(groups_.size(), workers,
                 [&](std::size_t i) { results[i] = clean_graph(groups_[i].graph(params.threshold), params); });

    CleanOutput out;
    out.cleaned.iteration = iteration;
    out.cleaned.threshold_used = params.threshold;
    out.diagnostics.reserve(results.size());
    for (auto& r : results) {
        if (!r.kept.empty()) out.cleaned.kept.emplace(r.diagnostics.label, std::move(r.kept));
        out.diagnostics.push_back(std::move(r.diagnostics));
    }
    return out;
}

std::vector<double> DistanceCache::distinct_distances() const {
    std::vector<double> all;
    for (const auto& g : groups_) {
        const auto n = g.dist.rows();
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = i + 1; j < n; ++j) all.push_back(g.dist(i, j));
        }
    }
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    return all;
}

CleanOutput clean_dataset_with_diagnostics(const WeakDataset& ds, const EmbeddingModel& model,
                                           const CleanParams& params, std::size_t workers, int iteration) {
    params.validate();
    return DistanceCache(ds, model, workers).clean(params, workers, iteration);
}

CleanedDataset clean_dataset(const WeakDataset& ds, const EmbeddingModel& model, const CleanParams& params,
                             std::size_t workers, int iteration) {
    return clean_dataset_with_diagnostics(ds, model, params, workers, iteration).cleaned;
}

void save_diagnostics(const std::vector<GroupDiagnostics>& rows, const std::filesystem::path& path) {
    auto out = detail::open_output(path);
    for (const auto& r : rows) {
        nlohmann::json j;
        j["label"] = r.label;
        j["group_size"] = r.group_size;
        j["edge_count"] = r.edge_count;
        j["anchor_record_id"] = r.anchor ? nlohmann::json(*r.anchor) : nlohmann::json(nullptr);
        j["component_size"] = r.component_size;
        j["second_component_size"] = r.second_component_size;
        out << j.dump() << '\n';
    }
}

}  // namespace wlclean
