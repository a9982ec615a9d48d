#include "wlclean/config.hpp"

#include "wlclean/errors.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>

namespace wlclean {

using nlohmann::json;

void RunConfig::propagate() {
    synth.seed = seed;
    iterate.train_config.seed = seed;
    iterate.workers = workers;
}

void RunConfig::validate() const {
    if (workers < 1) throw ConfigError("workers must be at least 1");
    synth.validate();
    iterate.clean_params.validate();
    iterate.train_config.validate();
    iterate.validate();
}

namespace {

json scalar_to_json(const YAML::Node& node) {
    const auto& text = node.Scalar();
    if (node.Tag() == "!") return text;  // quoted
    if (text == "true" || text == "True") return true;
    if (text == "false" || text == "False") return false;
    if (text == "null" || text == "~" || text.empty()) return nullptr;
    {
        std::istringstream in(text);
        long long v = 0;
        if (in >> v && in.peek() == std::char_traits<char>::eof()) return v;
    }
    {
        std::istringstream in(text);
        double v = 0.0;
        if (in >> v && in.peek() == std::char_traits<char>::eof()) return v;
    }
    return text;
}

json node_to_json(const YAML::Node& node) {
    switch (node.Type()) {
        case YAML::NodeType::Null:
        case YAML::NodeType::Undefined:
            return nullptr;
        case YAML::NodeType::Scalar:
            return scalar_to_json(node);
        case YAML::NodeType::Sequence: {
            json arr = json::array();
            for (const auto& item : node) arr.push_back(node_to_json(item));
            return arr;
        }
        case YAML::NodeType::Map: {
            json obj = json::object();
            for (const auto& kv : node) obj[kv.first.as<std::string>()] = node_to_json(kv.second);
            return obj;
        }
    }
    return nullptr;
}

// Reads the keys of one table, rejecting anything not consumed.
class Section {
  public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_null() && !j_.is_object()) throw ConfigError("section '" + name_ + "' must be a table");
    }

    template <typename T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        if (j_.is_null() || !j_.contains(key)) return;
        const auto& v = j_.at(key);
        try {
            if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
                if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError("");
                out = v.get<T>();
            } else if constexpr (std::is_same_v<T, double>) {
                if (!v.is_number()) throw ConfigError("");
                out = v.get<double>();
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw ConfigError("");
                out = v.get<bool>();
            } else {
                if (!v.is_string()) throw ConfigError("");
                out = v.get<std::string>();
            }
        } catch (const std::exception&) {
            throw ConfigError("bad value for " + name_ + "." + key + ": " + v.dump());
        }
    }

    [[nodiscard]] const json* sub(const char* key) {
        seen_.insert(key);
        if (j_.is_null() || !j_.contains(key)) return nullptr;
        return &j_.at(key);
    }

    void finish() const {
        if (j_.is_null()) return;
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.count(key)) {
                throw ConfigError("unknown key '" + (name_.empty() ? key : name_ + "." + key) + "'");
            }
        }
    }

  private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

const json kNull = nullptr;

const json& or_null(const json* p) { return p ? *p : kNull; }

}  // namespace

RunConfig config_from_json(const json& j) {
    if (!j.is_object() && !j.is_null()) throw ConfigError("config must be a table");
    RunConfig cfg;
    Section top(j, "");
    top.read("seed", cfg.seed);
    top.read("workers", cfg.workers);

    {
        Section s(or_null(top.sub("synth")), "synth");
        auto& c = cfg.synth;
        s.read("n_identities", c.n_identities);
        if (const auto* range = s.sub("group_size_range")) {
            auto count = [](const json& v) { return v.is_number_integer() && v.get<long long>() >= 0; };
            if (!range->is_array() || range->size() != 2 || !count((*range)[0]) || !count((*range)[1])) {
                throw ConfigError("synth.group_size_range must be [lo, hi]");
            }
            c.group_min = (*range)[0].get<std::size_t>();
            c.group_max = (*range)[1].get<std::size_t>();
        }
        s.read("contamination", c.contamination);
        s.read("latent_dim", c.latent_dim);
        s.read("walk_step", c.walk_step);
        s.read("walk_radius", c.walk_radius);
        s.read("center_scale", c.center_scale);
        s.read("shift_conditioning", c.shift_conditioning);
        s.read("noise_sigma", c.noise_sigma);
        s.finish();
    }
    {
        Section s(or_null(top.sub("clean")), "clean");
        auto& c = cfg.iterate.clean_params;
        s.read("threshold", c.threshold);
        s.read("min_group_size", c.min_group_size);
        std::string rule = to_string(c.component_rule);
        s.read("component_rule", rule);
        c.component_rule = parse_component_rule(rule);
        s.finish();
    }
    {
        Section s(or_null(top.sub("train")), "train");
        auto& c = cfg.iterate.train_config;
        s.read("margin", c.margin);
        s.read("learning_rate", c.learning_rate);
        s.read("identities_per_batch", c.identities_per_batch);
        s.read("images_per_identity", c.images_per_identity);
        s.read("iterations", c.iterations);
        std::string policy = to_string(c.policy);
        s.read("policy", policy);
        c.policy = parse_policy(policy);
        s.read("sparse_batch_size", c.sparse_batch_size);
        s.finish();
    }
    {
        Section s(or_null(top.sub("pipeline")), "pipeline");
        auto& c = cfg.iterate;
        s.read("max_iterations", c.max_iterations);
        s.read("target_precision", c.target_precision);
        s.read("min_recall_gain", c.min_recall_gain);
        s.read("calibration_points", c.calibration_points);
        s.read("holdout_count", cfg.holdout_count);
        s.finish();
    }
    {
        Section s(or_null(top.sub("pca")), "pca");
        auto& c = cfg.iterate.pca;
        s.read("enabled", c.enabled);
        s.read("dim", c.dim);
        s.read("refit", c.refit);
        s.read("use_for_filtering", c.use_for_filtering);
        s.finish();
    }
    {
        Section s(or_null(top.sub("verify")), "verify");
        s.read("n_pos", cfg.verify_pos);
        s.read("n_neg", cfg.verify_neg);
        s.finish();
    }
    {
        Section s(or_null(top.sub("pr")), "pr");
        s.read("points", cfg.pr_points);
        s.finish();
    }
    top.finish();

    cfg.propagate();
    cfg.validate();
    return cfg;
}

json config_to_json(const RunConfig& cfg) {
    const auto& sy = cfg.synth;
    const auto& it = cfg.iterate;
    const auto& cp = it.clean_params;
    const auto& tc = it.train_config;
    json j;
    j["seed"] = cfg.seed;
    j["workers"] = cfg.workers;
    j["synth"] = {{"n_identities", sy.n_identities},
                  {"group_size_range", {sy.group_min, sy.group_max}},
                  {"contamination", sy.contamination},
                  {"latent_dim", sy.latent_dim},
                  {"walk_step", sy.walk_step},
                  {"walk_radius", sy.walk_radius},
                  {"center_scale", sy.center_scale},
                  {"shift_conditioning", sy.shift_conditioning},
                  {"noise_sigma", sy.noise_sigma}};
    j["clean"] = {{"threshold", cp.threshold},
                  {"min_group_size", cp.min_group_size},
                  {"component_rule", to_string(cp.component_rule)}};
    j["train"] = {{"margin", tc.margin},
                  {"learning_rate", tc.learning_rate},
                  {"identities_per_batch", tc.identities_per_batch},
                  {"images_per_identity", tc.images_per_identity},
                  {"iterations", tc.iterations},
                  {"policy", to_string(tc.policy)},
                  {"sparse_batch_size", tc.sparse_batch_size}};
    j["pipeline"] = {{"max_iterations", it.max_iterations},
                     {"target_precision", it.target_precision},
                     {"min_recall_gain", it.min_recall_gain},
                     {"calibration_points", it.calibration_points},
                     {"holdout_count", cfg.holdout_count}};
    j["pca"] = {{"enabled", it.pca.enabled},
                {"dim", it.pca.dim},
                {"refit", it.pca.refit},
                {"use_for_filtering", it.pca.use_for_filtering}};
    j["verify"] = {{"n_pos", cfg.verify_pos}, {"n_neg", cfg.verify_neg}};
    j["pr"] = {{"points", cfg.pr_points}};
    return j;
}

json yaml_to_json(const std::string& text) {
    try {
        return node_to_json(YAML::Load(text));
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return config_from_json(yaml_to_json(buf.str()));
}

}  // namespace wlclean
