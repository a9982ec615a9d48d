#pragma once

#include "wlclean/dataset.hpp"
#include "wlclean/embed.hpp"
#include "wlclean/match_graph.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace wlclean {

/// Purity and coverage of a cleaned set. A record is correct iff its truth
/// label equals its weak label.
struct PrecisionRecall {
    std::optional<double> precision;  // unset when nothing was kept
    std::optional<double> recall;     // unset when the dataset has no correct record
    std::size_t kept = 0;
    std::size_t correct_kept = 0;
    std::size_t correct_total = 0;
};

/// Counts over the labels of `ds` only; kept sets for other labels are
/// ignored. Throws IntegrityError when a counted record lacks a truth label
/// or a kept id is not in its group.
[[nodiscard]] PrecisionRecall precision_recall(const CleanedDataset& cleaned, const WeakDataset& ds);

struct PrPoint {
    double threshold = 0.0;
    std::optional<double> precision;
    std::optional<double> recall;
    std::size_t kept_count = 0;
};

/// One point per threshold (ascending) via clean_dataset + precision_recall.
[[nodiscard]] std::vector<PrPoint> pr_curve(const WeakDataset& ds, const EmbeddingModel& model,
                                            const CleanParams& params, std::span<const double> thresholds,
                                            std::size_t workers = 1);

/// Same, reusing precomputed distances.
[[nodiscard]] std::vector<PrPoint> pr_curve(const DistanceCache& cache, const WeakDataset& ds,
                                            const CleanParams& params, std::span<const double> thresholds,
                                            std::size_t workers = 1);

/// CSV `threshold,precision,recall,kept_count`; undefined values are empty.
void save_pr_curve(std::span<const PrPoint> curve, const std::filesystem::path& path);

struct VerificationPair {
    RecordId a = 0;
    RecordId b = 0;
    bool same = false;

    bool operator==(const VerificationPair&) const = default;
};

/// Samples `n_pos` same-identity and `n_neg` different-identity pairs by truth
/// label, without replacement. Throws ConfigError when more pairs are asked
/// for than exist.
[[nodiscard]] std::vector<VerificationPair> make_pairs(const WeakDataset& eval_ds, std::size_t n_pos,
                                                       std::size_t n_neg, std::mt19937_64& rng);

struct VerificationReport {
    double mean_accuracy = 0.0;
    std::vector<double> fold_accuracies;
    std::vector<double> fold_thresholds;
};

inline constexpr std::size_t kVerificationFolds = 10;

/// 10-fold protocol on precomputed pair distances: folds are stratified by
/// same/different and seeded; each fold is scored at the threshold that
/// maximizes accuracy on the other nine. Candidate thresholds are midpoints
/// of consecutive distinct training distances plus one above the maximum;
/// pairs closer than the threshold are predicted "same".
[[nodiscard]] VerificationReport verification_from_distances(std::span<const double> distances,
                                                             std::span<const bool> same, std::uint64_t seed);

/// Embeds each pair with `model` and runs verification_from_distances.
[[nodiscard]] VerificationReport verification_accuracy(std::span<const VerificationPair> pairs,
                                                       const EmbeddingModel& model, const WeakDataset& ds,
                                                       std::uint64_t seed);

void save_verification_report(const VerificationReport& report, const std::filesystem::path& path);

}  // namespace wlclean
