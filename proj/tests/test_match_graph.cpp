#include "support.hpp"
#include "wlclean/errors.hpp"
#include "wlclean/match_graph.hpp"

#include <doctest.h>

using namespace wlclean;
using testutil::rec;

namespace {

using Edges = std::vector<std::pair<std::size_t, std::size_t>>;

std::vector<RecordId> iota_ids(std::size_t n, RecordId start = 0) {
    std::vector<RecordId> ids(n);
    std::iota(ids.begin(), ids.end(), start);
    return ids;
}

// Unit vectors on a circle at the given angles; chord distance 2 sin(dθ/2).
WeakDataset arc_group(const std::string& label, const std::vector<double>& angles, RecordId first = 0,
                      const std::vector<std::string>& truth = {}) {
    std::vector<FaceRecord> recs;
    for (std::size_t i = 0; i < angles.size(); ++i) {
        recs.push_back(rec(first + RecordId(i), label, {std::cos(angles[i]), std::sin(angles[i])},
                           truth.empty() ? label : truth[i]));
    }
    return WeakDataset(std::move(recs), 2);
}

double chord_angle(double d) { return 2.0 * std::asin(d / 2.0); }

}  // namespace

TEST_CASE("threshold boundary is strict") {
    const double a = chord_angle(0.1);
    const auto ds = arc_group("x", {0.0, a, 2 * a});
    const auto g = build_graph(ds, "x", EmbeddingModel::identity(2), 0.15);
    CHECK(g.has_edge(0, 1));
    CHECK(g.has_edge(1, 2));
    CHECK_FALSE(g.has_edge(0, 2));
    CHECK(g.edge_count() == 2);

    const auto eq = GroupDistances::compute("x", {0, 1}, Matrix{{1.0, 0.0}, {0.0, 1.0}});
    CHECK_FALSE(eq.graph(std::sqrt(2.0)).has_edge(0, 1));
    CHECK(eq.graph(std::nextafter(std::sqrt(2.0), 3.0)).has_edge(0, 1));
}

TEST_CASE("complete and empty graphs") {
    std::vector<double> angles;
    for (int i = 0; i < 12; ++i) angles.push_back(0.5 * i);
    const auto ds = arc_group("x", angles);
    const auto g = build_graph(ds, "x", EmbeddingModel::identity(2), 2.01);
    CHECK(g.edge_count() == 12 * 11 / 2);
    const auto single = arc_group("y", {1.0});
    CHECK(build_graph(single, "y", EmbeddingModel::identity(2), 2.01).edge_count() == 0);
    CHECK_THROWS_AS((void)build_graph(ds, "ghost", EmbeddingModel::identity(2), 1.0), IntegrityError);
}

TEST_CASE("anchor selection") {
    const auto path = IdentityGraph::from_edges("p", {10, 11, 12}, {{0, 1}, {1, 2}});
    CHECK(find_anchor(path) == 1);
    const auto tie = IdentityGraph::from_edges("t", {7, 3, 9}, {{0, 1}});
    CHECK(tie.nodes[find_anchor(tie)] == 3);
    const auto isolated = IdentityGraph::from_edges("i", {8, 5, 6}, {});
    CHECK(isolated.nodes[find_anchor(isolated)] == 5);
    CHECK(isolated.degree(find_anchor(isolated)) == 0);
}

TEST_CASE("component extraction") {
    const auto g = IdentityGraph::from_edges("g", iota_ids(5), {{0, 1}, {1, 2}, {3, 4}});
    CHECK(extract_component(g, 1) == std::set<RecordId>{0, 1, 2});
    CHECK(extract_component(g, 4) == std::set<RecordId>{3, 4});
    const auto lone = IdentityGraph::from_edges("l", iota_ids(3), {{1, 2}});
    CHECK(extract_component(lone, 0) == std::set<RecordId>{0});

    // A chain whose insertion order defeats a single pass over the remainder.
    const auto chain = IdentityGraph::from_edges("c", {3, 2, 0, 1}, {{2, 3}, {3, 1}, {1, 0}});
    CHECK(extract_component(chain, 2) == std::set<RecordId>{0, 1, 2, 3});
    CHECK_THROWS((void)extract_component(chain, 9));
}

TEST_CASE("extract_component agrees with a union-find oracle on random graphs") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 1500; ++trial) {
        const std::size_t n = 1 + rng() % 50;
        const double p = std::uniform_real_distribution<double>(0.0, 0.15)(rng);
        Edges edges;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (std::bernoulli_distribution(p)(rng)) edges.emplace_back(i, j);
        std::vector<RecordId> ids = iota_ids(n, 100);
        std::shuffle(ids.begin(), ids.end(), rng);
        const auto g = IdentityGraph::from_edges("r", ids, edges);
        const std::size_t root = rng() % n;
        REQUIRE(extract_component(g, root) == testutil::union_find_component(n, ids, edges, root));
    }
}

TEST_CASE("components partition the graph") {
    const auto g = IdentityGraph::from_edges("g", iota_ids(7), {{0, 1}, {2, 3}, {3, 4}, {5, 6}, {6, 2}});
    auto comps = connected_components(g);
    std::size_t total = 0;
    for (const auto& c : comps) total += c.size();
    CHECK(total == 7);
    CHECK(comps.size() == 2);
}

TEST_CASE("component rules") {
    // Star of 4 (anchor, degree 3) and a path of 6 (max degree 2).
    Edges e{{0, 1}, {0, 2}, {0, 3}, {4, 5}, {5, 6}, {6, 7}, {7, 8}, {8, 9}};
    const auto g = IdentityGraph::from_edges("g", iota_ids(10), e);
    CHECK(clean_graph(g, {1.0, 1, ComponentRule::anchor}).kept == std::set<RecordId>{0, 1, 2, 3});
    CHECK(clean_graph(g, {1.0, 1, ComponentRule::largest}).kept == std::set<RecordId>{4, 5, 6, 7, 8, 9});

    const auto tie = IdentityGraph::from_edges("t", {9, 8, 2, 5}, {{0, 1}, {2, 3}});
    CHECK(clean_graph(tie, {1.0, 1, ComponentRule::largest}).kept == std::set<RecordId>{2, 5});
    CHECK(parse_component_rule("largest") == ComponentRule::largest);
    CHECK_THROWS_AS((void)parse_component_rule("biggest"), ConfigError);
}

TEST_CASE("clean_identity keeps the anchor component") {
    // Eight points on a tight arc plus two far outliers.
    std::vector<double> angles;
    for (int i = 0; i < 8; ++i) angles.push_back(0.05 * i);
    angles.push_back(2.0);
    angles.push_back(4.0);
    const auto ds = arc_group("x", angles);
    const auto model = EmbeddingModel::identity(2);
    const auto kept = clean_identity(ds, "x", model, {0.08, 1, ComponentRule::anchor});
    CHECK(kept == std::set<RecordId>{0, 1, 2, 3, 4, 5, 6, 7});

    const auto g = build_graph(ds, "x", model, 0.08);
    std::vector<RecordId> ids = g.nodes;
    Edges edges;
    for (std::size_t i = 0; i < g.size(); ++i)
        for (auto j : g.adjacency[i])
            if (i < j) edges.emplace_back(i, j);
    CHECK(kept == testutil::union_find_component(g.size(), ids, edges, find_anchor(g)));

    CHECK(clean_identity(arc_group("y", {0.0, 0.01}), "y", model, {0.5, 3, ComponentRule::anchor}).empty());
}

TEST_CASE("a contaminating clique is excluded") {
    std::vector<double> angles;
    std::vector<std::string> truth;
    for (int i = 0; i < 7; ++i) {
        angles.push_back(0.04 * i);
        truth.push_back("x");
    }
    for (int i = 0; i < 3; ++i) {
        angles.push_back(3.0 + 0.01 * i);
        truth.push_back("other");
    }
    const auto ds = arc_group("x", angles, 0, truth);
    const auto kept = clean_identity(ds, "x", EmbeddingModel::identity(2), {0.05, 1, ComponentRule::anchor});
    for (auto id : kept) CHECK(ds.at(id).correctly_labeled());
    CHECK(kept.size() == 7);
}

TEST_CASE("kept records are joined by sub-threshold paths") {
    const auto ds = testutil::chain_dataset(1, 60, 3, 5, 0.3);
    const auto model = EmbeddingModel::identity(3);
    const double T = 0.05;
    const auto g = build_graph(ds, "p0", model, T);
    const auto kept = clean_identity(ds, "p0", model, {T, 1, ComponentRule::anchor});
    std::map<RecordId, std::size_t> pos;
    for (std::size_t i = 0; i < g.size(); ++i) pos[g.nodes[i]] = i;
    const auto anchor = find_anchor(g);
    for (auto id : kept) {
        // BFS restricted to kept nodes, checking every edge distance directly.
        std::set<std::size_t> seen{anchor};
        std::vector<std::size_t> stack{anchor};
        while (!stack.empty()) {
            auto u = stack.back();
            stack.pop_back();
            for (std::size_t v = 0; v < g.size(); ++v) {
                if (seen.count(v) || !kept.count(g.nodes[v])) continue;
                if (distance(model.embed(ds.at(g.nodes[u])), model.embed(ds.at(g.nodes[v]))) < T) {
                    seen.insert(v);
                    stack.push_back(v);
                }
            }
        }
        CHECK(seen.count(pos[id]));
    }
}

TEST_CASE("fixed-root components grow with the threshold") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        const auto ds = testutil::chain_dataset(1, 40, 4, rng(), 0.2);
        GroupDistances gd = GroupDistances::compute(
            "p0", ds.group("p0"), embed_records(EmbeddingModel::identity(4), ds, ds.group("p0")));
        const std::size_t root = rng() % 40;
        std::set<RecordId> prev;
        for (double T = 0.005; T < 2.0; T *= 1.5) {
            const auto cur = extract_component(gd.graph(T), root);
            CHECK(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
            prev = cur;
        }
    }
}

TEST_CASE("clean_dataset is independent per group and across workers") {
    const auto ds = testutil::chain_dataset(12, 25, 5, 17, 0.4);
    const auto model = EmbeddingModel::identity(5);
    const CleanParams params{0.04, 1, ComponentRule::anchor};
    const auto one = clean_dataset(ds, model, params, 1);
    const auto eight = clean_dataset(ds, model, params, 8);
    CHECK(one.kept == eight.kept);
    for (const auto& label : ds.labels()) {
        const auto solo = clean_identity(ds, label, model, params);
        CHECK((one.kept.count(label) ? one.kept.at(label) : std::set<RecordId>{}) == solo);
    }

    // Reversing record order must not change the result.
    auto recs = ds.records();
    std::reverse(recs.begin(), recs.end());
    CHECK(clean_dataset(WeakDataset(recs, 5), model, params, 3).kept == one.kept);

    testutil::TempDir tmp;
    save_cleaned(one, tmp / "a.jsonl");
    save_cleaned(eight, tmp / "b.jsonl");
    CHECK(testutil::read_file(tmp / "a.jsonl") == testutil::read_file(tmp / "b.jsonl"));
}

TEST_CASE("diagnostics") {
    Edges e{{0, 1}, {0, 2}, {3, 4}};
    const auto g = IdentityGraph::from_edges("g", {10, 11, 12, 13, 14, 15}, e, 0.5);
    const auto r = clean_graph(g, {0.5, 1, ComponentRule::anchor});
    CHECK(r.diagnostics.group_size == 6);
    CHECK(r.diagnostics.edge_count == 3);
    CHECK(r.diagnostics.anchor == std::optional<RecordId>(10));
    CHECK(r.diagnostics.component_size == 3);
    CHECK(r.diagnostics.second_component_size == 2);

    const auto gated = clean_graph(g, {0.5, 7, ComponentRule::anchor});
    CHECK(gated.kept.empty());
    CHECK_FALSE(gated.diagnostics.anchor.has_value());
}

TEST_CASE("threshold validation") {
    CHECK_THROWS_AS(CleanParams({0.0, 1, ComponentRule::anchor}).validate(), ConfigError);
    CHECK_THROWS_AS(CleanParams({-1.0, 1, ComponentRule::anchor}).validate(), ConfigError);
    CHECK_THROWS_AS(CleanParams({std::nan(""), 1, ComponentRule::anchor}).validate(), ConfigError);
    CHECK_NOTHROW(CleanParams({2.01, 1, ComponentRule::anchor}).validate());
}
