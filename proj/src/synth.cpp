#include "wlclean/synth.hpp"

#include "wlclean/errors.hpp"
#include "io.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

namespace wlclean {

void SynthConfig::validate() const {
    if (n_identities < 2) throw ConfigError("synth needs at least 2 identities");
    if (group_min < 1 || group_min > group_max) throw ConfigError("group size range must satisfy 1 <= lo <= hi");
    if (!(contamination >= 0.0 && contamination < 0.5)) throw ConfigError("contamination must be in [0, 0.5)");
    if (latent_dim < 1) throw ConfigError("latent_dim must be positive");
    if (!(walk_step > 0.0)) throw ConfigError("walk_step must be positive");
    if (!(walk_radius > 0.0)) throw ConfigError("walk_radius must be positive");
    if (!(center_scale > 0.0)) throw ConfigError("center_scale must be positive");
    if (!(shift_conditioning >= 1.0)) throw ConfigError("shift_conditioning must be >= 1");
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be non-negative");
}

Label synth_label(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "id_%04zu", i);
    return buf;
}

namespace {

using Rng = std::mt19937_64;

Vector gaussian_vector(std::size_t n, Rng& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Vector v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = g(rng);
    return v;
}

Vector unit_direction(std::size_t n, Rng& rng) {
    Vector v = gaussian_vector(n, rng);
    while (v.norm() == 0.0) v = gaussian_vector(n, rng);
    return v.normalized();
}

Matrix random_orthogonal(std::size_t n, Rng& rng) {
    Matrix g(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (Eigen::Index j = 0; j < g.cols(); ++j) g.col(j) = gaussian_vector(n, rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ();
    // Fix column signs so q is a deterministic function of g.
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
        if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    }
    return q;
}

// Chain of `length` points: each step moves walk_step in a random direction,
// then is pulled back onto the ball of radius walk_radius around the center.
std::vector<Vector> walk(const Vector& center, std::size_t length, const SynthConfig& cfg, Rng& rng) {
    std::vector<Vector> pts;
    pts.reserve(length);
    Vector x = center;
    for (std::size_t t = 0; t < length; ++t) {
        if (t > 0) {
            x += cfg.walk_step * unit_direction(cfg.latent_dim, rng);
            const Vector off = x - center;
            const double r = off.norm();
            if (r > cfg.walk_radius) x = center + off * (cfg.walk_radius / r);
        }
        pts.push_back(x);
    }
    return pts;
}

}  // namespace

SynthData generate(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const std::size_t n = cfg.n_identities;
    const std::size_t dim = cfg.latent_dim;

    // Shift map S = U diag(s) V^T, s log-spaced on [1, conditioning].
    std::vector<double> spectrum(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        const double f = dim == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(dim - 1);
        spectrum[i] = std::exp(f * std::log(cfg.shift_conditioning));
    }
    const Matrix u = random_orthogonal(dim, rng);
    const Matrix v = random_orthogonal(dim, rng);
    const Vector s = Eigen::Map<const Vector>(spectrum.data(), static_cast<Eigen::Index>(dim));
    const Matrix shift = u * s.asDiagonal() * v.transpose();

    std::vector<Vector> centers;
    centers.reserve(n);
    for (std::size_t i = 0; i < n; ++i) centers.push_back(cfg.center_scale * gaussian_vector(dim, rng));

    // Slot masks (true = contaminant) with a strict correct majority.
    std::uniform_int_distribution<std::size_t> size_dist(cfg.group_min, cfg.group_max);
    std::bernoulli_distribution contaminated(cfg.contamination);
    std::vector<std::vector<char>> masks(n);
    std::size_t resampled = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t size = size_dist(rng);
        for (;;) {
            masks[i].assign(size, 0);
            std::size_t bad = 0;
            for (auto& m : masks[i]) {
                m = contaminated(rng) ? 1 : 0;
                bad += static_cast<std::size_t>(m);
            }
            if (2 * bad < size) break;
            ++resampled;
        }
    }

    std::vector<std::vector<Vector>> chains(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t genuine = 0;
        for (char m : masks[i]) genuine += static_cast<std::size_t>(m == 0);
        chains[i] = walk(centers[i], genuine, cfg, rng);
    }

    SynthData data;
    data.shift = shift;
    std::vector<FaceRecord> records;
    std::normal_distribution<double> noise(0.0, 1.0);
    RecordId next_id = 0;
    std::size_t contaminated_count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t cursor = 0;
        for (char m : masks[i]) {
            Vector latent;
            std::size_t truth = i;
            if (m == 0) {
                latent = chains[i][cursor++];
            } else {
                // A look-alike of another identity: near a random point of its chain.
                truth = std::uniform_int_distribution<std::size_t>(0, n - 2)(rng);
                if (truth >= i) ++truth;
                const auto& other = chains[truth];
                const auto& base = other[std::uniform_int_distribution<std::size_t>(0, other.size() - 1)(rng)];
                latent = base + cfg.walk_step * unit_direction(dim, rng);
                ++contaminated_count;
            }
            Vector observed = shift * latent;
            for (Eigen::Index k = 0; k < observed.size(); ++k) observed(k) += cfg.noise_sigma * noise(rng);
            FaceRecord rec;
            rec.record_id = next_id++;
            rec.weak_label = synth_label(i);
            rec.truth_label = synth_label(truth);
            rec.features.assign(observed.data(), observed.data() + observed.size());
            records.push_back(std::move(rec));
            data.latent.push_back(std::move(latent));
        }
    }
    data.dataset = WeakDataset(std::move(records), dim);
    data.meta = SynthMetadata{cfg, spectrum, data.dataset.size(), contaminated_count, resampled};
    return data;
}

EmbeddingModel oracle_model(const SynthData& data) {
    return EmbeddingModel(std::nullopt, data.shift.inverse());
}

void save_metadata(const SynthMetadata& meta, const std::filesystem::path& path) {
    auto out = detail::open_output(path);
    const auto& c = meta.config;
    nlohmann::json j;
    j["seed"] = c.seed;
    j["config"] = {{"n_identities", c.n_identities},
                   {"group_size_range", {c.group_min, c.group_max}},
                   {"contamination", c.contamination},
                   {"latent_dim", c.latent_dim},
                   {"walk_step", c.walk_step},
                   {"walk_radius", c.walk_radius},
                   {"center_scale", c.center_scale},
                   {"shift_conditioning", c.shift_conditioning},
                   {"noise_sigma", c.noise_sigma},
                   {"seed", c.seed}};
    j["shift_spectrum"] = meta.shift_spectrum;
    j["record_count"] = meta.record_count;
    j["contaminated_count"] = meta.contaminated_count;
    j["resampled_groups"] = meta.resampled_groups;
    out << j.dump(2) << '\n';
}

}  // namespace wlclean
