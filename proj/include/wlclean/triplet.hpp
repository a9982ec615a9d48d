#pragma once

#include "wlclean/dataset.hpp"
#include "wlclean/embed.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace wlclean {

/// (anchor, positive, negative): anchor and positive share a weak label, the
/// negative carries a different one.
struct Triplet {
    RecordId anchor = 0;
    RecordId positive = 0;
    RecordId negative = 0;

    bool operator==(const Triplet&) const = default;
};

enum class SamplingPolicy { dense, sparse };

[[nodiscard]] SamplingPolicy parse_policy(const std::string& s);
[[nodiscard]] std::string to_string(SamplingPolicy p);

struct TrainConfig {
    /// Floor of the per-triplet hinge max(d_pos^2 - d_neg^2, C). Negative
    /// values act as the usual triplet margin.
    double margin = -0.2;
    double learning_rate = 0.5;
    std::size_t identities_per_batch = 10;
    std::size_t images_per_identity = 10;
    std::size_t iterations = 500;
    SamplingPolicy policy = SamplingPolicy::dense;
    std::size_t sparse_batch_size = 1000;
    std::uint64_t seed = 0;

    void validate() const;
};

using Rng = std::mt19937_64;

/// Every valid triplet over a batch of m groups with k records each:
/// m * k * (k - 1) * (m - 1) * k of them. Throws ConfigError when m < 2,
/// k < 2 or the groups differ in size.
[[nodiscard]] std::vector<Triplet> gen_dense(const std::vector<std::vector<RecordId>>& batch);

/// `n` independent draws: a uniform identity among those with >= 2 records,
/// two distinct records from it, and a record from a uniformly chosen other
/// identity.
[[nodiscard]] std::vector<Triplet> gen_sparse(const WeakDataset& ds, std::size_t n, Rng& rng);

/// Sum over triplets of max(|F(a) - F(p)|^2 - |F(a) - F(n)|^2, C).
[[nodiscard]] double triplet_loss(const EmbeddingModel& model, const WeakDataset& ds,
                                  std::span<const Triplet> triplets, double margin);

/// Gradient of triplet_loss with respect to the head matrix.
[[nodiscard]] Matrix loss_gradient(const EmbeddingModel& model, const WeakDataset& ds,
                                   std::span<const Triplet> triplets, double margin);

/// Loss and gradient over a set of distinct images.
///
/// The derivative with respect to each image's embedding is accumulated across
/// all active triplets first, then pushed back through normalization, PCA and
/// the head once per image.
class TripletObjective {
  public:
    struct Evaluation {
        double loss = 0.0;
        std::size_t active = 0;
        Matrix gradient;  // same shape as the head
    };

    /// `inputs` holds base_features(x) of each image, one per row.
    TripletObjective(const EmbeddingModel& model, Matrix inputs);

    /// Triplets index rows of `inputs`.
    [[nodiscard]] Evaluation evaluate(const Matrix& head, std::span<const std::array<std::size_t, 3>> triplets,
                                      double margin, bool with_gradient = true) const;

  private:
    const EmbeddingModel* model_;
    Matrix inputs_;
};

struct LossPoint {
    std::size_t iteration = 0;
    double batch_loss = 0.0;       // mean over the batch's triplets
    double active_fraction = 0.0;  // share of triplets above the floor
};

struct TrainResult {
    EmbeddingModel model;
    std::vector<LossPoint> trace;
};

/// Plain SGD on the head: W <- W - lr * grad / |batch|. Deterministic given
/// cfg.seed. `observer` sees each loss point as it is produced, including the
/// ones before a collapse. Throws TrainingCollapse naming the iteration.
[[nodiscard]] TrainResult train_head(const WeakDataset& ds, const EmbeddingModel& model, const TrainConfig& cfg,
                                     const std::function<void(const LossPoint&)>& observer = {});

/// CSV `iteration,batch_loss,active_fraction`.
void save_loss_trace(std::span<const LossPoint> trace, const std::filesystem::path& path);

}  // namespace wlclean
