#include "support.hpp"
#include "wlclean/errors.hpp"
#include "wlclean/metrics.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

using namespace wlclean;
using testutil::rec;

namespace {

// Group "a": ids 0..9, the first `correct` truly "a".
WeakDataset counted(int group_size, int correct) {
    std::vector<FaceRecord> recs;
    for (int i = 0; i < group_size; ++i) recs.push_back(rec(i, "a", {double(i)}, i < correct ? "a" : "zz"));
    return WeakDataset(std::move(recs), 1);
}

CleanedDataset keep(std::initializer_list<RecordId> ids, const Label& label = "a") {
    CleanedDataset c;
    if (ids.size()) c.kept[label] = std::set<RecordId>(ids);
    return c;
}

// Points on the unit circle at small angles; chords are nearly the angles.
WeakDataset circle(const std::vector<std::pair<std::string, std::vector<std::pair<double, std::string>>>>& groups) {
    std::vector<FaceRecord> recs;
    RecordId id = 0;
    for (const auto& [label, pts] : groups)
        for (const auto& [angle, truth] : pts) recs.push_back(rec(id++, label, {std::cos(angle), std::sin(angle)}, truth));
    return WeakDataset(std::move(recs), 2);
}

}  // namespace

TEST_CASE("hand counted precision and recall") {
    const auto ds = counted(10, 6);
    auto pr = precision_recall(keep({0, 1, 2, 7}), ds);
    CHECK(*pr.precision == 0.75);
    CHECK(*pr.recall == 0.5);

    pr = precision_recall(keep({0, 1, 2, 3, 4, 5}), ds);
    CHECK(*pr.precision == 1.0);
    CHECK(*pr.recall == 1.0);

    pr = precision_recall(keep({}), ds);
    CHECK_FALSE(pr.precision.has_value());
    CHECK(*pr.recall == 0.0);

    pr = precision_recall(keep({6, 7, 8, 9}), ds);
    CHECK(*pr.precision == 0.0);
    CHECK(*pr.recall == 0.0);

    const auto none_correct = counted(4, 0);
    pr = precision_recall(keep({1, 2}), none_correct);
    CHECK(*pr.precision == 0.0);
    CHECK_FALSE(pr.recall.has_value());

    CHECK_THROWS_AS((void)precision_recall(keep({42}), ds), IntegrityError);
    const WeakDataset unlabeled({rec(0, "a", {1.0})}, 1);
    CHECK_THROWS_AS((void)precision_recall(keep({0}), unlabeled), IntegrityError);
}

TEST_CASE("precision and recall across groups") {
    // a: 5 records, 4 correct; b: 3 records, 1 correct (truth "a" or junk count as wrong).
    const WeakDataset ds({rec(0, "a", {0}, "a"), rec(1, "a", {0}, "a"), rec(2, "a", {0}, "a"), rec(3, "a", {0}, "a"),
                          rec(4, "a", {0}, "b"), rec(5, "b", {0}, "b"), rec(6, "b", {0}, "a"), rec(7, "b", {0}, "junk")},
                         1);
    CleanedDataset c;
    c.kept["a"] = {0, 1, 4};
    c.kept["b"] = {5, 6};
    const auto pr = precision_recall(c, ds);
    CHECK(pr.kept == 5);
    CHECK(pr.correct_kept == 3);
    CHECK(pr.correct_total == 5);
    CHECK(*pr.precision == 3.0 / 5.0);
    CHECK(*pr.recall == 3.0 / 5.0);
}

TEST_CASE("pr curve limits") {
    const double s = 0.01;
    const auto ds = circle({{"a", {{0.0, "zz"}, {s, "a"}, {2 * s, "a"}, {4 * s, "a"}}},
                            {"b", {{1.0, "b"}, {1.0 + s, "b"}, {1.0 + 3 * s, "x"}}},
                            {"c", {{2.0, "q"}, {2.0 + 2 * s, "c"}, {2.5, "c"}}}});
    const auto model = EmbeddingModel::identity(2);
    const CleanParams params{1.0, 1, ComponentRule::anchor};
    const std::vector<double> ts{1e-4, 2.01};
    const auto curve = pr_curve(ds, model, params, ts);
    REQUIRE(curve.size() == 2);

    // Below every distance each group keeps its lowest id; only b's is correct.
    const std::size_t correct = 3 + 2 + 2;
    CHECK(curve[0].kept_count == 3);
    CHECK(*curve[0].recall == 1.0 / correct);
    CHECK(*curve[0].precision == 1.0 / 3.0);

    CHECK(curve[1].kept_count == ds.size());
    CHECK(*curve[1].precision == double(correct) / double(ds.size()));
    CHECK(*curve[1].recall == 1.0);

    const std::vector<double> unsorted{0.5, 0.1};
    CHECK_THROWS_AS((void)pr_curve(ds, model, params, unsorted), ConfigError);
}

TEST_CASE("pr curve equals per-threshold cleaning") {
    const auto ds = testutil::chain_dataset(6, 20, 4, 3, 0.6);
    auto recs = ds.records();
    for (std::size_t i = 0; i < recs.size(); i += 7) recs[i].truth_label = "other";
    const WeakDataset noisy(recs, 4);
    const auto model = EmbeddingModel::identity(4);
    const CleanParams params{1.0, 1, ComponentRule::anchor};
    std::vector<double> ts;
    for (double t = 0.01; t < 0.3; t += 0.02) ts.push_back(t);
    const auto curve = pr_curve(noisy, model, params, ts, 4);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        CleanParams p = params;
        p.threshold = ts[i];
        const auto pr = precision_recall(clean_dataset(noisy, model, p), noisy);
        CHECK(curve[i].kept_count == pr.kept);
        CHECK(curve[i].precision == pr.precision);
        CHECK(curve[i].recall == pr.recall);
    }
}

TEST_CASE("anchor-rule nesting can break when the anchor moves") {
    // Cluster A (ids 0-2) and chain B (ids 3-6). At T1 both have max degree 2
    // and the tie goes to A; at T2 B's inner nodes reach degree 3.
    const auto ds = circle({{"g",
                             {{0.00, "g"}, {0.01, "g"}, {0.02, "g"},
                              {1.00, "g"}, {1.01, "g"}, {1.02, "g"}, {1.03, "g"}}}});
    const auto model = EmbeddingModel::identity(2);
    const auto k1 = clean_identity(ds, "g", model, {0.015, 1, ComponentRule::anchor});
    const auto k2 = clean_identity(ds, "g", model, {0.025, 1, ComponentRule::anchor});
    CHECK(k1 == std::set<RecordId>{0, 1, 2});
    CHECK(k2 == std::set<RecordId>{3, 4, 5, 6});
}

TEST_CASE("nesting holds whenever the earlier anchor survives") {
    std::mt19937_64 rng(5);
    int stable = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const auto ds = testutil::chain_dataset(1, 30, 3, rng(), 0.25);
        const auto emb = embed_records(EmbeddingModel::identity(3), ds, ds.group("p0"));
        const auto gd = GroupDistances::compute("p0", ds.group("p0"), emb);
        const double t1 = std::uniform_real_distribution<double>(0.005, 0.05)(rng);
        const double t2 = t1 * std::uniform_real_distribution<double>(1.0, 3.0)(rng);
        const auto g1 = gd.graph(t1);
        const auto a1 = g1.nodes[find_anchor(g1)];
        const auto k1 = clean_graph(g1, {t1, 1, ComponentRule::anchor}).kept;
        const auto k2 = clean_graph(gd.graph(t2), {t2, 1, ComponentRule::anchor}).kept;
        if (!k2.count(a1)) continue;
        ++stable;
        CHECK(std::includes(k2.begin(), k2.end(), k1.begin(), k1.end()));
    }
    CHECK(stable > 50);
}

TEST_CASE("pr curve csv") {
    testutil::TempDir tmp;
    const std::vector<PrPoint> curve{{0.5, std::nullopt, 0.0, 0}, {0.75, 0.5, 0.25, 4}};
    save_pr_curve(curve, tmp / "pr.csv");
    const auto text = testutil::read_file(tmp / "pr.csv");
    CHECK(text == "threshold,precision,recall,kept_count\n0.5,,0,0\n0.75,0.5,0.25,4\n");
}

TEST_CASE("pair sampling") {
    const auto ds = testutil::chain_dataset(5, 8, 3, 1);
    std::mt19937_64 a(7), b(7);
    const auto pairs = make_pairs(ds, 50, 60, a);
    CHECK(pairs == make_pairs(ds, 50, 60, b));
    std::size_t pos = 0;
    std::set<std::pair<RecordId, RecordId>> distinct;
    for (const auto& p : pairs) {
        CHECK(p.a != p.b);
        CHECK((ds.at(p.a).truth_label == ds.at(p.b).truth_label) == p.same);
        distinct.emplace(std::min(p.a, p.b), std::max(p.a, p.b));
        pos += p.same;
    }
    CHECK(pos == 50);
    CHECK(distinct.size() == pairs.size());

    std::mt19937_64 c(1);
    const auto negs = make_pairs(ds, 0, 30, c);
    CHECK(negs.size() == 30);
    for (const auto& p : negs) CHECK_FALSE(p.same);

    // Exactly all 5 * C(8,2) = 140 positive pairs exist.
    CHECK(make_pairs(ds, 140, 0, c).size() == 140);
    CHECK_THROWS_AS((void)make_pairs(ds, 141, 0, c), ConfigError);
    const WeakDataset single({rec(0, "a", {1.0}, "a"), rec(1, "a", {2.0}, "a")}, 1);
    CHECK_THROWS_AS((void)make_pairs(single, 1, 1, c), ConfigError);
}

TEST_CASE("verification on separable, collapsed and shuffled data") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> d;
    std::vector<char> same_c;
    for (int i = 0; i < 400; ++i) {
        const bool s = i % 2 == 0;
        d.push_back(s ? u(rng) : 1.5 + u(rng));
        same_c.push_back(s);
    }
    auto as_bools = [](const std::vector<char>& v) {
        auto out = std::make_unique<bool[]>(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i];
        return out;
    };
    auto same = as_bools(same_c);
    const auto sep = verification_from_distances(d, {same.get(), d.size()}, 3);
    CHECK(sep.mean_accuracy == 1.0);
    CHECK(sep.fold_accuracies.size() == kVerificationFolds);
    CHECK(sep.fold_thresholds.size() == kVerificationFolds);

    // Identical distances: every pair is declared same.
    std::vector<double> flat(300, 0.25);
    std::vector<char> flat_same(300, 0);
    for (int i = 0; i < 300; i += 3) flat_same[i] = 1;  // a third positive, spread evenly over folds
    auto fs = as_bools(flat_same);
    CHECK(verification_from_distances(flat, {fs.get(), 300}, 1).mean_accuracy == doctest::Approx(1.0 / 3.0));

    // Shuffled labels: chance level.
    const std::size_t n = 4000;
    std::vector<double> dn;
    std::vector<char> sn;
    for (std::size_t i = 0; i < n; ++i) {
        dn.push_back(u(rng));
        sn.push_back(i < n / 2);
    }
    std::shuffle(sn.begin(), sn.end(), rng);
    auto snb = as_bools(sn);
    const double acc = verification_from_distances(dn, {snb.get(), n}, 9).mean_accuracy;
    CHECK(std::abs(acc - 0.5) < 3.0 * std::sqrt(0.25 / n));

    CHECK_THROWS_AS((void)verification_from_distances(std::vector<double>(9, 1.0), {same.get(), 9}, 0), ConfigError);
}

TEST_CASE("verification depends only on distance order under affine maps") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> d;
    std::vector<char> sc;
    for (int i = 0; i < 1000; ++i) {
        const bool s = i % 3 == 0;
        d.push_back((s ? 0.8 : 1.2) + 0.3 * g(rng));
        sc.push_back(s);
    }
    auto same = std::make_unique<bool[]>(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) same[i] = sc[i];
    const auto base = verification_from_distances(d, {same.get(), d.size()}, 4);
    for (auto [a, b] : {std::pair{2.0, 0.0}, std::pair{3.0, 0.5}, std::pair{0.1, 7.0}}) {
        std::vector<double> t;
        for (double x : d) t.push_back(a * x + b);
        const auto r = verification_from_distances(t, {same.get(), t.size()}, 4);
        CHECK(r.fold_accuracies == base.fold_accuracies);
    }
}

TEST_CASE("verification with a model") {
    const auto ds = testutil::chain_dataset(6, 15, 3, 2, 0.05);
    std::mt19937_64 rng(3);
    const auto pairs = make_pairs(ds, 200, 200, rng);
    const auto r = verification_accuracy(pairs, EmbeddingModel::identity(3), ds, 0);
    CHECK(r.mean_accuracy > 0.95);

    testutil::TempDir tmp;
    save_verification_report(r, tmp / "v.json");
    const auto j = nlohmann::json::parse(testutil::read_file(tmp / "v.json"));
    CHECK(j.at("fold_accuracies").size() == 10);
    CHECK(j.at("mean_accuracy").get<double>() == r.mean_accuracy);
}
