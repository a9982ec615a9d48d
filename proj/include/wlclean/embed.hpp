#pragma once

#include "wlclean/dataset.hpp"
#include "wlclean/linalg.hpp"
#include "wlclean/pca.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace wlclean {

/// Frozen base transform, trainable linear head, optional PCA, then L2
/// normalization:
///
///     u = head * base(x)            (base is the identity when unset)
///     u = pca.components * (u - pca.mean)   when a PCA transform is attached
///     F(x) = u / |u|
///
/// Instances are immutable; training produces new models via `with_head`.
class EmbeddingModel {
  public:
    EmbeddingModel() = default;
    EmbeddingModel(std::optional<Matrix> base, Matrix head, std::optional<PcaTransform> pca = std::nullopt);

    /// Identity base and identity head on `dim` features.
    [[nodiscard]] static EmbeddingModel identity(std::size_t dim);

    [[nodiscard]] std::size_t input_dim() const noexcept;
    [[nodiscard]] std::size_t base_dim() const noexcept { return static_cast<std::size_t>(head_.cols()); }
    [[nodiscard]] std::size_t head_dim() const noexcept { return static_cast<std::size_t>(head_.rows()); }
    [[nodiscard]] std::size_t output_dim() const noexcept;

    [[nodiscard]] const std::optional<Matrix>& base() const noexcept { return base_; }
    [[nodiscard]] const Matrix& head() const noexcept { return head_; }
    [[nodiscard]] const std::optional<PcaTransform>& pca() const noexcept { return pca_; }

    [[nodiscard]] EmbeddingModel with_head(Matrix head) const;
    [[nodiscard]] EmbeddingModel with_pca(std::optional<PcaTransform> pca) const;

    /// base(x); the head's input.
    [[nodiscard]] Vector base_features(std::span<const double> features) const;
    /// head(base(x)); the PCA input.
    [[nodiscard]] Vector head_output(std::span<const double> features) const;
    /// The vector normalized by `embed`.
    [[nodiscard]] Vector pre_normalized(std::span<const double> features) const;

    /// Unit-norm embedding. Throws DegenerateEmbedding when the
    /// pre-normalization vector is zero, DimensionError on size mismatch.
    [[nodiscard]] Vector embed(std::span<const double> features) const;
    [[nodiscard]] Vector embed(const FaceRecord& rec) const { return embed(rec.features); }

  private:
    std::optional<Matrix> base_;
    Matrix head_;
    std::optional<PcaTransform> pca_;
};

/// Euclidean distance between unit vectors; lies in [0, 2].
[[nodiscard]] double distance(const Vector& a, const Vector& b);

/// Embeds the listed records, one per row.
[[nodiscard]] Matrix embed_records(const EmbeddingModel& model, const WeakDataset& ds,
                                   std::span<const RecordId> ids);

/// Random matrix with orthonormal rows (rows <= cols), from a seeded QR.
[[nodiscard]] Matrix random_orthonormal_rows(std::size_t rows, std::size_t cols, std::uint64_t seed);

/// Initial head: identity when square, random orthonormal rows otherwise.
[[nodiscard]] Matrix initial_head(std::size_t out_dim, std::size_t in_dim, std::uint64_t seed);

// Serialization. Matrices are `{"rows": r, "cols": c, "data": [[...], ...]}`.
void save_head(const Matrix& head, const std::filesystem::path& path);
[[nodiscard]] Matrix load_head(const std::filesystem::path& path);
void save_model(const EmbeddingModel& model, const std::filesystem::path& path);
[[nodiscard]] EmbeddingModel load_model(const std::filesystem::path& path);

/// Replaces every record's features with a precomputed embedding read from
/// JSONL rows `{"record_id": int, "embedding": [...]}`. Every record must be
/// covered.
[[nodiscard]] WeakDataset with_precomputed_embeddings(const WeakDataset& ds, const std::filesystem::path& path);

}  // namespace wlclean
