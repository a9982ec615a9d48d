#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace wlclean {

using RecordId = std::int64_t;
using Label = std::string;

/// One observation: raw features plus the weak label it was collected under.
struct FaceRecord {
    RecordId record_id = 0;
    Label weak_label;
    std::vector<double> features;
    std::optional<Label> truth_label;

    /// Ground truth agrees with the weak label. False when truth is unknown.
    [[nodiscard]] bool correctly_labeled() const { return truth_label && *truth_label == weak_label; }

    bool operator==(const FaceRecord&) const = default;
};

/// Records grouped by weak label. Immutable after construction.
///
/// Group membership lists keep input order; group keys iterate in
/// lexicographic order so every traversal of the dataset is deterministic.
class WeakDataset {
  public:
    WeakDataset() = default;

    /// Validates ids, dimensions and finiteness. Throws IntegrityError or
    /// DimensionError.
    WeakDataset(std::vector<FaceRecord> records, std::size_t dim);

    [[nodiscard]] const std::vector<FaceRecord>& records() const noexcept { return records_; }
    [[nodiscard]] const std::map<Label, std::vector<RecordId>>& groups() const noexcept { return groups_; }
    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
    [[nodiscard]] std::size_t size() const noexcept { return records_.size(); }
    [[nodiscard]] bool empty() const noexcept { return records_.empty(); }

    [[nodiscard]] bool contains(RecordId id) const { return index_.count(id) != 0; }
    /// Throws IntegrityError for unknown ids.
    [[nodiscard]] const FaceRecord& at(RecordId id) const;
    [[nodiscard]] const std::vector<RecordId>& group(const Label& label) const;

    /// True when every record carries a truth label.
    [[nodiscard]] bool has_truth() const;
    [[nodiscard]] std::vector<Label> labels() const;

  private:
    std::vector<FaceRecord> records_;
    std::size_t dim_ = 0;
    std::map<Label, std::vector<RecordId>> groups_;
    std::unordered_map<RecordId, std::size_t> index_;
};

/// The kept subset D_t' produced by one cleaning pass.
///
/// Labels whose kept set is empty are omitted from `kept`.
struct CleanedDataset {
    std::map<Label, std::set<RecordId>> kept;
    int iteration = 0;
    double threshold_used = 0.0;

    [[nodiscard]] std::size_t kept_count() const;
};

enum class DatasetFormat { jsonl, csv };

[[nodiscard]] DatasetFormat format_from_path(const std::filesystem::path& path);

/// Loads a weak dataset. JSONL rows are
/// `{"record_id", "weak_label", "features", "truth_label"}`; CSV needs a
/// `record_id,weak_label[,truth_label],f0,f1,...` header.
[[nodiscard]] WeakDataset load_dataset(const std::filesystem::path& path, DatasetFormat format);
[[nodiscard]] WeakDataset load_dataset(const std::filesystem::path& path);

void save_dataset(const WeakDataset& ds, const std::filesystem::path& path);

/// Writes one `{"weak_label", "record_id", "iteration"}` row per kept record,
/// sorted by label then id.
void save_cleaned(const CleanedDataset& ds, const std::filesystem::path& path);

/// Inverse of save_cleaned. The row format has no threshold column, so
/// `threshold_used` comes back as NaN.
[[nodiscard]] CleanedDataset load_cleaned(const std::filesystem::path& path);

/// Splits off the groups named in `labels` as an evaluation set. The two
/// halves share no record.
[[nodiscard]] std::pair<WeakDataset, WeakDataset> holdout_split(const WeakDataset& ds,
                                                                const std::set<Label>& labels);

/// `count` labels chosen by a seeded shuffle of the sorted label list.
[[nodiscard]] std::set<Label> holdout_labels(const WeakDataset& ds, std::size_t count, std::uint64_t seed);

/// Only the records listed in `cleaned`.
[[nodiscard]] WeakDataset restrict_to(const WeakDataset& ds, const CleanedDataset& cleaned);

/// Drops groups smaller than `min_size`.
[[nodiscard]] WeakDataset drop_small_groups(const WeakDataset& ds, std::size_t min_size);

}  // namespace wlclean
