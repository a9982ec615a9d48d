#include "wlclean/metrics.hpp"

#include "wlclean/errors.hpp"
#include "io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <iomanip>
#include <numeric>
#include <unordered_set>

namespace wlclean {

PrecisionRecall precision_recall(const CleanedDataset& cleaned, const WeakDataset& ds) {
    PrecisionRecall pr;
    for (const auto& [label, ids] : ds.groups()) {
        for (RecordId id : ids) {
            const auto& rec = ds.at(id);
            if (!rec.truth_label) {
                throw IntegrityError("record " + std::to_string(id) + " has no truth label");
            }
            if (rec.correctly_labeled()) ++pr.correct_total;
        }
        auto it = cleaned.kept.find(label);
        if (it == cleaned.kept.end()) continue;
        for (RecordId id : it->second) {
            if (!ds.contains(id) || ds.at(id).weak_label != label) {
                throw IntegrityError("kept record " + std::to_string(id) + " is not in group '" + label + "'");
            }
            ++pr.kept;
            if (ds.at(id).correctly_labeled()) ++pr.correct_kept;
        }
    }
    if (pr.kept > 0) pr.precision = static_cast<double>(pr.correct_kept) / static_cast<double>(pr.kept);
    if (pr.correct_total > 0) {
        pr.recall = static_cast<double>(pr.correct_kept) / static_cast<double>(pr.correct_total);
    }
    return pr;
}

std::vector<PrPoint> pr_curve(const DistanceCache& cache, const WeakDataset& ds, const CleanParams& params,
                              std::span<const double> thresholds, std::size_t workers) {
    if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
        throw ConfigError("PR thresholds must be sorted ascending");
    }
    std::vector<PrPoint> curve;
    curve.reserve(thresholds.size());
    for (double t : thresholds) {
        CleanParams p = params;
        p.threshold = t;
        const auto out = cache.clean(p, workers);
        const auto pr = precision_recall(out.cleaned, ds);
        curve.push_back({t, pr.precision, pr.recall, pr.kept});
    }
    return curve;
}

std::vector<PrPoint> pr_curve(const WeakDataset& ds, const EmbeddingModel& model, const CleanParams& params,
                              std::span<const double> thresholds, std::size_t workers) {
    return pr_curve(DistanceCache(ds, model, workers), ds, params, thresholds, workers);
}

namespace {

void write_optional(std::ostream& out, const std::optional<double>& v) {
    if (v) out << *v;
}

}  // namespace

void save_pr_curve(std::span<const PrPoint> curve, const std::filesystem::path& path) {
    auto out = detail::open_output(path);
    out << "threshold,precision,recall,kept_count\n" << std::setprecision(17);
    for (const auto& p : curve) {
        out << p.threshold << ',';
        write_optional(out, p.precision);
        out << ',';
        write_optional(out, p.recall);
        out << ',' << p.kept_count << '\n';
    }
}

namespace {

std::uint64_t pair_key(std::size_t i, std::size_t j) {
    if (i > j) std::swap(i, j);
    return (static_cast<std::uint64_t>(i) << 32) | static_cast<std::uint64_t>(j);
}

// Draws `want` distinct pairs satisfying `accept` out of `available`. Dense
// requests enumerate and shuffle; sparse ones use rejection sampling.
template <typename Accept>
std::vector<std::pair<std::size_t, std::size_t>> draw_pairs(std::size_t n, std::size_t available, std::size_t want,
                                                            Accept accept, std::mt19937_64& rng) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    if (want == 0) return out;
    if (want * 2 >= available) {
        std::vector<std::pair<std::size_t, std::size_t>> all;
        all.reserve(available);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                if (accept(i, j)) all.emplace_back(i, j);
            }
        }
        std::shuffle(all.begin(), all.end(), rng);
        all.resize(want);
        return all;
    }
    std::unordered_set<std::uint64_t> used;
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    while (out.size() < want) {
        const auto i = pick(rng);
        const auto j = pick(rng);
        if (i == j || !accept(i, j)) continue;
        if (!used.insert(pair_key(i, j)).second) continue;
        out.emplace_back(std::min(i, j), std::max(i, j));
    }
    return out;
}

}  // namespace

std::vector<VerificationPair> make_pairs(const WeakDataset& eval_ds, std::size_t n_pos, std::size_t n_neg,
                                         std::mt19937_64& rng) {
    const auto& recs = eval_ds.records();
    std::map<Label, std::size_t> per_identity;
    for (const auto& r : recs) {
        if (!r.truth_label) throw IntegrityError("record " + std::to_string(r.record_id) + " has no truth label");
        ++per_identity[*r.truth_label];
    }
    const std::size_t n = recs.size();
    std::size_t same_available = 0;
    std::size_t largest = 0;
    for (const auto& [label, c] : per_identity) {
        same_available += c * (c - 1) / 2;
        largest = std::max(largest, c);
    }
    const std::size_t diff_available = n * (n - 1) / 2 - same_available;
    if (per_identity.size() < 2 || largest < 2) {
        throw ConfigError("verification pairs need 2 identities, one with at least 2 records");
    }
    if (n_pos > same_available || n_neg > diff_available) {
        throw ConfigError("requested " + std::to_string(n_pos) + " positive / " + std::to_string(n_neg) +
                          " negative pairs, only " + std::to_string(same_available) + " / " +
                          std::to_string(diff_available) + " exist");
    }
    auto same = [&](std::size_t i, std::size_t j) { return *recs[i].truth_label == *recs[j].truth_label; };
    auto diff = [&](std::size_t i, std::size_t j) { return !same(i, j); };

    std::vector<VerificationPair> out;
    out.reserve(n_pos + n_neg);
    for (auto [i, j] : draw_pairs(n, same_available, n_pos, same, rng)) {
        out.push_back({recs[i].record_id, recs[j].record_id, true});
    }
    for (auto [i, j] : draw_pairs(n, diff_available, n_neg, diff, rng)) {
        out.push_back({recs[i].record_id, recs[j].record_id, false});
    }
    return out;
}

namespace {

struct Scored {
    double distance;
    bool same;
};

// Threshold maximizing accuracy of "same iff distance < t"; first best wins.
// Candidates are the midpoints between consecutive distinct distances plus
// +inf (everything same), so the choice depends only on distance order.
double best_threshold(std::vector<Scored> train) {
    std::sort(train.begin(), train.end(), [](const Scored& a, const Scored& b) { return a.distance < b.distance; });
    const std::size_t negatives =
        static_cast<std::size_t>(std::count_if(train.begin(), train.end(), [](const Scored& s) { return !s.same; }));
    std::size_t best_correct = 0;
    constexpr double kAll = std::numeric_limits<double>::infinity();
    double best_t = kAll;
    bool have = false;
    // After consuming the first i entries (all predicted same):
    std::size_t pos_below = 0;
    std::size_t neg_below = 0;
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (train[i].same) {
            ++pos_below;
        } else {
            ++neg_below;
        }
        const bool boundary = i + 1 == train.size() || train[i + 1].distance > train[i].distance;
        if (!boundary) continue;
        const double t = i + 1 == train.size() ? kAll : 0.5 * (train[i].distance + train[i + 1].distance);
        const std::size_t correct = pos_below + (negatives - neg_below);
        if (!have || correct > best_correct) {
            best_correct = correct;
            best_t = t;
            have = true;
        }
    }
    return best_t;
}

}  // namespace

VerificationReport verification_from_distances(std::span<const double> distances, std::span<const bool> same,
                                               std::uint64_t seed) {
    if (distances.size() != same.size()) throw DimensionError("distances and labels differ in length");
    const std::size_t n = distances.size();
    if (n < kVerificationFolds) {
        throw ConfigError("verification needs at least " + std::to_string(kVerificationFolds) + " pairs");
    }
    std::vector<std::size_t> pos;
    std::vector<std::size_t> neg;
    for (std::size_t i = 0; i < n; ++i) (same[i] ? pos : neg).push_back(i);
    std::mt19937_64 rng(seed);
    std::shuffle(pos.begin(), pos.end(), rng);
    std::shuffle(neg.begin(), neg.end(), rng);
    std::vector<std::size_t> fold(n);
    for (std::size_t i = 0; i < pos.size(); ++i) fold[pos[i]] = i % kVerificationFolds;
    for (std::size_t j = 0; j < neg.size(); ++j) fold[neg[j]] = (pos.size() + j) % kVerificationFolds;

    VerificationReport report;
    for (std::size_t f = 0; f < kVerificationFolds; ++f) {
        std::vector<Scored> train;
        std::vector<Scored> test;
        for (std::size_t i = 0; i < n; ++i) (fold[i] == f ? test : train).push_back({distances[i], same[i]});
        const double t = best_threshold(std::move(train));
        std::size_t correct = 0;
        for (const auto& s : test) correct += static_cast<std::size_t>((s.distance < t) == s.same);
        report.fold_thresholds.push_back(t);
        report.fold_accuracies.push_back(static_cast<double>(correct) / static_cast<double>(test.size()));
    }
    report.mean_accuracy = std::accumulate(report.fold_accuracies.begin(), report.fold_accuracies.end(), 0.0) /
                           static_cast<double>(kVerificationFolds);
    return report;
}

VerificationReport verification_accuracy(std::span<const VerificationPair> pairs, const EmbeddingModel& model,
                                         const WeakDataset& ds, std::uint64_t seed) {
    std::vector<double> d;
    d.reserve(pairs.size());
    auto same = std::make_unique<bool[]>(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& p = pairs[i];
        if (p.a == p.b) throw IntegrityError("verification pair repeats record " + std::to_string(p.a));
        d.push_back(distance(model.embed(ds.at(p.a)), model.embed(ds.at(p.b))));
        same[i] = p.same;
    }
    return verification_from_distances(d, std::span<const bool>(same.get(), pairs.size()), seed);
}

void save_verification_report(const VerificationReport& report, const std::filesystem::path& path) {
    auto out = detail::open_output(path);
    nlohmann::json j;
    j["mean_accuracy"] = report.mean_accuracy;
    j["fold_accuracies"] = report.fold_accuracies;
    j["fold_thresholds"] = report.fold_thresholds;
    out << j.dump(2) << '\n';
}

}  // namespace wlclean
