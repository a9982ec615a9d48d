#pragma once

#include "wlclean/pipeline.hpp"
#include "wlclean/synth.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace wlclean {

/// Everything a CLI run can be configured with. Files are YAML with the
/// sections `synth`, `clean`, `train`, `pipeline`, `pca`, `verify`, `pr` and
/// the top-level keys `seed` and `workers`; unknown keys are rejected.
///
/// All randomness derives from `seed`: it seeds the generator, training, the
/// validation holdout, pair sampling and fold assignment.
struct RunConfig {
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    SynthConfig synth;
    IterationConfig iterate;
    std::size_t holdout_count = 10;
    std::size_t verify_pos = 2000;
    std::size_t verify_neg = 2000;
    std::size_t pr_points = 50;

    /// Pushes seed and workers into the nested configs.
    void propagate();
    /// Throws ConfigError on any out-of-range value.
    void validate() const;
};

[[nodiscard]] RunConfig config_from_json(const nlohmann::json& j);
[[nodiscard]] nlohmann::json config_to_json(const RunConfig& cfg);

/// YAML text to JSON: plain scalars become numbers or booleans when they
/// parse as such, quoted scalars stay strings.
[[nodiscard]] nlohmann::json yaml_to_json(const std::string& text);

/// Throws ConfigError on malformed or unknown settings, IoError when the file
/// cannot be read.
[[nodiscard]] RunConfig load_config(const std::filesystem::path& path);

}  // namespace wlclean
