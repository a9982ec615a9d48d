#include "wlclean/triplet.hpp"

#include "wlclean/errors.hpp"
#include "io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <unordered_map>

namespace wlclean {

namespace {
constexpr Eigen::Index kTabulateLimit = 1024;
}  // namespace

SamplingPolicy parse_policy(const std::string& s) {
    if (s == "dense") return SamplingPolicy::dense;
    if (s == "sparse") return SamplingPolicy::sparse;
    throw ConfigError("unknown sampling policy '" + s + "' (expected dense or sparse)");
}

std::string to_string(SamplingPolicy p) {
    return p == SamplingPolicy::dense ? "dense" : "sparse";
}

void TrainConfig::validate() const {
    if (!std::isfinite(margin)) throw ConfigError("margin must be finite");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning_rate must be non-negative");
    }
    if (policy == SamplingPolicy::dense && (identities_per_batch < 2 || images_per_identity < 2)) {
        throw ConfigError("dense sampling needs identities_per_batch >= 2 and images_per_identity >= 2");
    }
    if (policy == SamplingPolicy::sparse && sparse_batch_size < 1) {
        throw ConfigError("sparse_batch_size must be positive");
    }
}

std::vector<Triplet> gen_dense(const std::vector<std::vector<RecordId>>& batch) {
    const auto m = batch.size();
    if (m < 2) throw ConfigError("dense batch needs at least 2 identities");
    const auto k = batch.front().size();
    if (k < 2) throw ConfigError("dense batch needs at least 2 images per identity");
    for (const auto& g : batch) {
        if (g.size() != k) throw ConfigError("dense batch groups must all have " + std::to_string(k) + " records");
    }
    std::vector<Triplet> out;
    out.reserve(m * k * (k - 1) * (m - 1) * k);
    for (std::size_t gi = 0; gi < m; ++gi) {
        for (std::size_t a = 0; a < k; ++a) {
            for (std::size_t p = 0; p < k; ++p) {
                if (p == a) continue;
                for (std::size_t gj = 0; gj < m; ++gj) {
                    if (gj == gi) continue;
                    for (RecordId neg : batch[gj]) out.push_back({batch[gi][a], batch[gi][p], neg});
                }
            }
        }
    }
    return out;
}

namespace {

std::size_t uniform_index(Rng& rng, std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

// First `k` entries of a seeded partial Fisher-Yates shuffle.
template <typename T>
std::vector<T> sample_without_replacement(std::vector<T> pool, std::size_t k, Rng& rng) {
    for (std::size_t i = 0; i < k; ++i) {
        std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
    }
    pool.resize(k);
    return pool;
}

}  // namespace

std::vector<Triplet> gen_sparse(const WeakDataset& ds, std::size_t n, Rng& rng) {
    const auto labels = ds.labels();
    std::vector<std::size_t> anchors;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (ds.group(labels[i]).size() >= 2) anchors.push_back(i);
    }
    if (labels.size() < 2 || anchors.empty()) {
        throw ConfigError("sparse sampling needs 2 identities, one of them with 2 or more records");
    }
    std::vector<Triplet> out;
    out.reserve(n);
    for (std::size_t t = 0; t < n; ++t) {
        const auto gi = anchors[uniform_index(rng, anchors.size())];
        const auto& group = ds.group(labels[gi]);
        const auto a = uniform_index(rng, group.size());
        auto p = uniform_index(rng, group.size() - 1);
        if (p >= a) ++p;
        auto gj = uniform_index(rng, labels.size() - 1);
        if (gj >= gi) ++gj;
        const auto& other = ds.group(labels[gj]);
        out.push_back({group[a], group[p], other[uniform_index(rng, other.size())]});
    }
    return out;
}

TripletObjective::TripletObjective(const EmbeddingModel& model, Matrix inputs)
    : model_(&model), inputs_(std::move(inputs)) {}

TripletObjective::Evaluation TripletObjective::evaluate(const Matrix& head,
                                                        std::span<const std::array<std::size_t, 3>> triplets,
                                                        double margin, bool with_gradient) const {
    const auto& pca = model_->pca();
    const Eigen::Index images = inputs_.rows();

    // Forward: head, optional PCA, normalization.
    Matrix pre = inputs_ * head.transpose();
    if (pca) pre = (pre.rowwise() - pca->mean.transpose()) * pca->components.transpose();
    Vector norms = pre.rowwise().norm();
    for (Eigen::Index i = 0; i < images; ++i) {
        if (!(norms(i) > 0.0) || !std::isfinite(norms(i))) throw DegenerateEmbedding();
    }
    const Matrix emb = norms.cwiseInverse().asDiagonal() * pre;

    // Small batches (the dense policy) share squared distances and gradient
    // weights through images x images tables; large ones go triplet by triplet.
    const bool tabulate = images <= kTabulateLimit;
    Matrix sq = tabulate ? Matrix::Constant(images, images, -1.0) : Matrix();
    auto sqdist = [&](std::size_t i, std::size_t j) {
        const auto a = static_cast<Eigen::Index>(i);
        const auto b = static_cast<Eigen::Index>(j);
        if (!tabulate) return (emb.row(a) - emb.row(b)).squaredNorm();
        double& cell = sq(a, b);
        if (cell < 0.0) {
            cell = (emb.row(a) - emb.row(b)).squaredNorm();
            sq(b, a) = cell;
        }
        return cell;
    };

    // coef(i, j): weight of embedding j in dLoss/dF(i).
    Evaluation ev;
    Matrix coef = with_gradient && tabulate ? Matrix::Zero(images, images) : Matrix();
    Matrix grad_emb = with_gradient && !tabulate ? Matrix::Zero(images, emb.cols()) : Matrix();
    for (const auto& [a, p, n] : triplets) {
        const double diff = sqdist(a, p) - sqdist(a, n);
        if (diff <= margin) {
            ev.loss += margin;
            continue;
        }
        ev.loss += diff;
        ++ev.active;
        if (!with_gradient) continue;
        const auto ia = static_cast<Eigen::Index>(a);
        const auto ip = static_cast<Eigen::Index>(p);
        const auto in = static_cast<Eigen::Index>(n);
        // d/dFa = 2(Fn - Fp), d/dFp = 2(Fp - Fa), d/dFn = 2(Fa - Fn)
        if (tabulate) {
            coef(ia, in) += 2.0;
            coef(ia, ip) -= 2.0;
            coef(ip, ip) += 2.0;
            coef(ip, ia) -= 2.0;
            coef(in, ia) += 2.0;
            coef(in, in) -= 2.0;
        } else {
            grad_emb.row(ia) += 2.0 * (emb.row(in) - emb.row(ip));
            grad_emb.row(ip) += 2.0 * (emb.row(ip) - emb.row(ia));
            grad_emb.row(in) += 2.0 * (emb.row(ia) - emb.row(in));
        }
    }
    if (!with_gradient) return ev;

    ev.gradient = Matrix::Zero(head.rows(), head.cols());
    if (ev.active == 0) return ev;

    if (tabulate) grad_emb = coef * emb;
    // Through normalization: (g - F (F.g)) / |u|.
    Matrix grad_pre(images, emb.cols());
    for (Eigen::Index i = 0; i < images; ++i) {
        const double along = emb.row(i).dot(grad_emb.row(i));
        grad_pre.row(i) = (grad_emb.row(i) - along * emb.row(i)) / norms(i);
    }
    const Matrix grad_head_out = pca ? Matrix(grad_pre * pca->components) : grad_pre;
    ev.gradient = grad_head_out.transpose() * inputs_;
    return ev;
}

namespace {

struct LocalBatch {
    Matrix inputs;
    std::vector<std::array<std::size_t, 3>> triplets;
};

LocalBatch localize(const EmbeddingModel& model, const WeakDataset& ds, std::span<const Triplet> triplets) {
    LocalBatch batch;
    std::unordered_map<RecordId, std::size_t> slot;
    std::vector<RecordId> order;
    auto index_of = [&](RecordId id) {
        auto [it, fresh] = slot.emplace(id, order.size());
        if (fresh) order.push_back(id);
        return it->second;
    };
    batch.triplets.reserve(triplets.size());
    for (const auto& t : triplets) {
        const auto a = index_of(t.anchor);
        const auto p = index_of(t.positive);
        const auto n = index_of(t.negative);
        batch.triplets.push_back({a, p, n});
    }
    batch.inputs.resize(static_cast<Eigen::Index>(order.size()), static_cast<Eigen::Index>(model.base_dim()));
    for (std::size_t i = 0; i < order.size(); ++i) {
        batch.inputs.row(static_cast<Eigen::Index>(i)) = model.base_features(ds.at(order[i]).features).transpose();
    }
    return batch;
}

}  // namespace

double triplet_loss(const EmbeddingModel& model, const WeakDataset& ds, std::span<const Triplet> triplets,
                    double margin) {
    if (triplets.empty()) return 0.0;
    auto batch = localize(model, ds, triplets);
    TripletObjective objective(model, std::move(batch.inputs));
    return objective.evaluate(model.head(), batch.triplets, margin, false).loss;
}

Matrix loss_gradient(const EmbeddingModel& model, const WeakDataset& ds, std::span<const Triplet> triplets,
                     double margin) {
    if (triplets.empty()) return Matrix::Zero(model.head().rows(), model.head().cols());
    auto batch = localize(model, ds, triplets);
    TripletObjective objective(model, std::move(batch.inputs));
    return objective.evaluate(model.head(), batch.triplets, margin, true).gradient;
}

namespace {

std::vector<Triplet> sample_dense_batch(const std::vector<const std::vector<RecordId>*>& eligible,
                                        const TrainConfig& cfg, Rng& rng) {
    std::vector<std::size_t> pool(eligible.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    const auto chosen = sample_without_replacement(pool, cfg.identities_per_batch, rng);
    std::vector<std::vector<RecordId>> batch;
    batch.reserve(chosen.size());
    for (auto g : chosen) {
        batch.push_back(sample_without_replacement(*eligible[g], cfg.images_per_identity, rng));
    }
    return gen_dense(batch);
}

}  // namespace

TrainResult train_head(const WeakDataset& ds, const EmbeddingModel& model, const TrainConfig& cfg,
                       const std::function<void(const LossPoint&)>& observer) {
    cfg.validate();
    std::vector<const std::vector<RecordId>*> eligible;
    for (const auto& [label, ids] : ds.groups()) {
        // Smaller groups would force duplicate images into a dense batch.
        if (ids.size() >= cfg.images_per_identity) eligible.push_back(&ids);
    }
    if (cfg.policy == SamplingPolicy::dense && eligible.size() < cfg.identities_per_batch && cfg.iterations > 0) {
        throw ConfigError("dense sampling needs " + std::to_string(cfg.identities_per_batch) +
                          " identities with at least " + std::to_string(cfg.images_per_identity) +
                          " records, found " + std::to_string(eligible.size()));
    }

    Rng rng(cfg.seed);
    Matrix head = model.head();
    TrainResult result{model, {}};
    result.trace.reserve(cfg.iterations);
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        const auto triplets = cfg.policy == SamplingPolicy::dense ? sample_dense_batch(eligible, cfg, rng)
                                                                  : gen_sparse(ds, cfg.sparse_batch_size, rng);
        auto batch = localize(model, ds, triplets);
        TripletObjective objective(model, std::move(batch.inputs));
        TripletObjective::Evaluation ev;
        try {
            ev = objective.evaluate(head, batch.triplets, cfg.margin, true);
        } catch (const DegenerateEmbedding& e) {
            throw TrainingCollapse(e.what(), static_cast<long>(it));
        }
        const auto count = static_cast<double>(batch.triplets.size());
        LossPoint point{it, ev.loss / count, static_cast<double>(ev.active) / count};
        result.trace.push_back(point);
        if (observer) observer(point);

        head -= (cfg.learning_rate / count) * ev.gradient;
        if (!head.allFinite()) {
            throw TrainingCollapse("non-finite head", static_cast<long>(it));
        }
    }
    result.model = model.with_head(std::move(head));
    return result;
}

void save_loss_trace(std::span<const LossPoint> trace, const std::filesystem::path& path) {
    auto out = detail::open_output(path);
    out << "iteration,batch_loss,active_fraction\n" << std::setprecision(17);
    for (const auto& p : trace) {
        out << p.iteration << ',' << p.batch_loss << ',' << p.active_fraction << '\n';
    }
}

}  // namespace wlclean
