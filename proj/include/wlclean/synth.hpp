#pragma once

#include "wlclean/dataset.hpp"
#include "wlclean/embed.hpp"
#include "wlclean/linalg.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace wlclean {

/// Generator for ground-truthed weakly labeled data.
///
/// Each identity is a bounded random walk in a latent space (consecutive
/// samples lie within `walk_step`, every sample within `walk_radius` of the
/// identity's center). A `contamination` share of slots is filled with
/// samples of other identities. Observed features are S * latent + noise,
/// where S has condition number `shift_conditioning`; the identity model
/// therefore sees distorted distances, and a head close to S^-1 undoes them.
struct SynthConfig {
    std::size_t n_identities = 50;
    std::size_t group_min = 30;
    std::size_t group_max = 100;
    double contamination = 0.15;
    std::size_t latent_dim = 8;
    double walk_step = 1.4;
    double walk_radius = 2.5;
    double center_scale = 1.0;
    double shift_conditioning = 5.0;
    double noise_sigma = 0.01;
    std::uint64_t seed = 0;

    /// Throws ConfigError.
    void validate() const;
};

struct SynthMetadata {
    SynthConfig config;
    std::vector<double> shift_spectrum;  // singular values of S, ascending
    std::size_t record_count = 0;
    std::size_t contaminated_count = 0;
    std::size_t resampled_groups = 0;  // groups redrawn to keep a correct majority
};

struct SynthData {
    WeakDataset dataset;
    SynthMetadata meta;
    Matrix shift;                  // S
    std::vector<Vector> latent;    // aligned with dataset.records()
};

[[nodiscard]] SynthData generate(const SynthConfig& cfg);

/// Label of identity i, e.g. "id_0007".
[[nodiscard]] Label synth_label(std::size_t i);

/// Identity base with head S^-1: the model that sees latent geometry.
[[nodiscard]] EmbeddingModel oracle_model(const SynthData& data);

void save_metadata(const SynthMetadata& meta, const std::filesystem::path& path);

}  // namespace wlclean
