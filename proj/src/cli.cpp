#include "wlclean/cli.hpp"

#include "wlclean/config.hpp"
#include "wlclean/errors.hpp"
#include "wlclean/metrics.hpp"
#include "wlclean/pipeline.hpp"
#include "wlclean/synth.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>

namespace wlclean::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return kUsage;
    if (dynamic_cast<const NumericalError*>(&e)) return kNumerical;
    if (dynamic_cast<const Error*>(&e)) return kData;
    if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return kData;
    return kFailure;
}

namespace {

void log(const std::string& msg) { std::cerr << "[wlclean] " << msg << '\n'; }

/// One resolved invocation; everything a manifest needs to replay it.
struct Invocation {
    std::string command;
    std::string config_path;
    RunConfig config;
    std::map<std::string, std::string> inputs;   // role -> path
    std::map<std::string, std::string> options;  // command-specific extras
    fs::path out;
};

class Stopwatch {
  public:
    void lap(const std::string& stage) {
        const auto now = std::chrono::steady_clock::now();
        timings_[stage] = std::chrono::duration<double>(now - last_).count();
        last_ = now;
    }
    [[nodiscard]] json to_json() const { return json(timings_); }

  private:
    std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
    std::map<std::string, double> timings_;
};

/// Collects outputs and results; written once at the end of a command.
/// Wall-clock timings go to a separate timings.json so the manifest itself
/// is reproducible byte for byte.
class Manifest {
  public:
    explicit Manifest(const Invocation& inv) {
        j_["command"] = inv.command;
        j_["config_path"] = inv.config_path;
        j_["config"] = config_to_json(inv.config);
        j_["seed"] = inv.config.seed;
        j_["workers"] = inv.config.workers;
        j_["inputs"] = json(inv.inputs);
        j_["options"] = json(inv.options);
        j_["outputs"] = json::object();
        j_["results"] = json::object();
    }

    void output(const std::string& role, const std::string& relative) { j_["outputs"][role] = relative; }
    json& results() { return j_["results"]; }

    void write(const fs::path& out, const Stopwatch& clock, bool partial = false) const {
        const std::string suffix = partial ? ".partial" : "";
        write_json(j_, out / ("manifest.json" + suffix));
        write_json(clock.to_json(), out / ("timings.json" + suffix));
    }

    static void write_json(const json& j, const fs::path& path) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write '" + path.string() + "'");
        f << j.dump(2) << '\n';
    }

  private:
    json j_;
};

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

const std::string& require_input(const Invocation& inv, const std::string& role) {
    auto it = inv.inputs.find(role);
    if (it == inv.inputs.end() || it->second.empty()) {
        throw ConfigError(inv.command + " needs --" + role);
    }
    return it->second;
}

std::optional<std::string> optional_input(const Invocation& inv, const std::string& role) {
    auto it = inv.inputs.find(role);
    if (it == inv.inputs.end() || it->second.empty()) return std::nullopt;
    return it->second;
}

WeakDataset load_input_dataset(const Invocation& inv, const std::string& role = "dataset") {
    auto ds = load_dataset(require_input(inv, role));
    if (auto emb = optional_input(inv, "embeddings")) ds = with_precomputed_embeddings(ds, *emb);
    return ds;
}

EmbeddingModel load_input_model(const Invocation& inv, const WeakDataset& ds) {
    auto model = optional_input(inv, "model") ? load_model(*optional_input(inv, "model"))
                                              : EmbeddingModel::identity(ds.dim());
    if (model.input_dim() != ds.dim()) {
        throw DimensionError("model expects " + std::to_string(model.input_dim()) + " features, dataset has " +
                             std::to_string(ds.dim()));
    }
    return model;
}

void record_cleaning(json& results, const CleanedDataset& cleaned, const WeakDataset& ds) {
    results["kept_count"] = cleaned.kept_count();
    results["threshold"] = cleaned.threshold_used;
    if (ds.has_truth()) {
        const auto pr = precision_recall(cleaned, ds);
        results["precision"] = optional_json(pr.precision);
        results["recall"] = optional_json(pr.recall);
    }
}

// ---- commands --------------------------------------------------------------

int cmd_gen(const Invocation& inv) {
    Stopwatch clock;
    Manifest manifest(inv);
    const auto data = generate(inv.config.synth);
    clock.lap("generate");
    save_dataset(data.dataset, inv.out / "dataset.jsonl");
    save_metadata(data.meta, inv.out / "meta.json");
    clock.lap("write");
    manifest.output("dataset", "dataset.jsonl");
    manifest.output("metadata", "meta.json");
    manifest.results()["record_count"] = data.meta.record_count;
    manifest.results()["contaminated_count"] = data.meta.contaminated_count;
    manifest.write(inv.out, clock);
    log("generated " + std::to_string(data.meta.record_count) + " records");
    return kOk;
}

int cmd_clean(const Invocation& inv) {
    Stopwatch clock;
    Manifest manifest(inv);
    const auto ds = load_input_dataset(inv);
    const auto model = load_input_model(inv, ds);
    clock.lap("load");
    const auto out = clean_dataset_with_diagnostics(ds, model, inv.config.iterate.clean_params, inv.config.workers, 1);
    clock.lap("clean");
    save_cleaned(out.cleaned, inv.out / "cleaned.jsonl");
    save_diagnostics(out.diagnostics, inv.out / "diagnostics.jsonl");
    manifest.output("cleaned", "cleaned.jsonl");
    manifest.output("diagnostics", "diagnostics.jsonl");
    record_cleaning(manifest.results(), out.cleaned, ds);
    clock.lap("write");
    manifest.write(inv.out, clock);
    log("kept " + std::to_string(out.cleaned.kept_count()) + " of " + std::to_string(ds.size()) + " records");
    return kOk;
}

int cmd_train(const Invocation& inv) {
    Stopwatch clock;
    Manifest manifest(inv);
    auto ds = load_input_dataset(inv);
    if (auto cleaned = optional_input(inv, "cleaned")) ds = restrict_to(ds, load_cleaned(*cleaned));
    const auto model = load_input_model(inv, ds);
    clock.lap("load");
    std::vector<LossPoint> trace;
    try {
        auto result = train_head(ds, model, inv.config.iterate.train_config,
                                 [&](const LossPoint& p) { trace.push_back(p); });
        clock.lap("train");
        save_model(result.model, inv.out / "model.json");
        save_head(result.model.head(), inv.out / "head.json");
        save_loss_trace(trace, inv.out / "loss_trace.csv");
    } catch (const TrainingCollapse& e) {
        save_loss_trace(trace, inv.out / "loss_trace.csv.partial");
        manifest.output("loss_trace", "loss_trace.csv.partial");
        manifest.results()["failure"] = e.what();
        clock.lap("train");
        manifest.write(inv.out, clock, true);
        log(e.what());
        return kNumerical;
    }
    manifest.output("model", "model.json");
    manifest.output("head", "head.json");
    manifest.output("loss_trace", "loss_trace.csv");
    if (!trace.empty()) {
        manifest.results()["first_batch_loss"] = trace.front().batch_loss;
        manifest.results()["last_batch_loss"] = trace.back().batch_loss;
    }
    manifest.write(inv.out, clock);
    return kOk;
}

std::pair<WeakDataset, WeakDataset> split_for_iterate(const Invocation& inv, const WeakDataset& ds) {
    if (optional_input(inv, "validation")) {
        auto validation = load_input_dataset(inv, "validation");
        return {ds, std::move(validation)};
    }
    const auto count = inv.config.holdout_count;
    if (count == 0 || count >= ds.groups().size()) {
        throw ConfigError("pipeline.holdout_count must be between 1 and the number of labels minus 1");
    }
    return holdout_split(ds, holdout_labels(ds, count, inv.config.seed));
}

void write_run(const CleanRun& run, const fs::path& out, Manifest& manifest, json& entry) {
    const std::string dir = "iter_" + std::to_string(run.iteration);
    save_cleaned(run.cleaned, out / dir / "cleaned.jsonl");
    save_diagnostics(run.diagnostics, out / dir / "diagnostics.jsonl");
    save_pr_curve(run.calibration_curve, out / dir / "calibration_pr.csv");
    save_model(run.model, out / dir / "model.json");
    save_head(run.model.head(), out / dir / "head.json");
    entry["iteration"] = run.iteration;
    entry["T"] = run.threshold;
    entry["precision"] = optional_json(run.precision);
    entry["recall"] = optional_json(run.recall);
    entry["kept_count"] = run.cleaned.kept_count();
    entry["validation_precision"] = optional_json(run.validation_point.precision);
    entry["validation_recall"] = optional_json(run.validation_point.recall);
    entry["cleaned_path"] = dir + "/cleaned.jsonl";
    entry["diagnostics_path"] = dir + "/diagnostics.jsonl";
    entry["calibration_path"] = dir + "/calibration_pr.csv";
    entry["model_path"] = dir + "/model.json";
    if (!run.loss_trace.empty()) {
        save_loss_trace(run.loss_trace, out / dir / "loss_trace.csv");
        entry["loss_trace_path"] = dir + "/loss_trace.csv";
    } else {
        entry["loss_trace_path"] = nullptr;
    }
    (void)manifest;
}

int cmd_iterate(const Invocation& inv) {
    Stopwatch clock;
    Manifest manifest(inv);
    const auto full = load_input_dataset(inv);
    const auto [ds, validation] = split_for_iterate(inv, full);
    const auto base = load_input_model(inv, ds);
    clock.lap("load");
    const auto result = run_pipeline(ds, base, validation, inv.config.iterate);
    clock.lap("pipeline");

    json iterations = json::array();
    for (const auto& run : result.runs) {
        json entry;
        write_run(run, inv.out, manifest, entry);
        iterations.push_back(std::move(entry));
        log("iteration " + std::to_string(run.iteration) + ": T=" + std::to_string(run.threshold) + " kept " +
            std::to_string(run.cleaned.kept_count()));
    }
    manifest.results()["iterations"] = std::move(iterations);
    manifest.results()["validation_labels"] = validation.labels();
    manifest.results()["stop_reason"] = result.stop_reason ? json(*result.stop_reason) : json(nullptr);
    clock.lap("write");

    if (result.failure) {
        const std::string dir = "iter_" + std::to_string(result.failed_iteration);
        if (!result.failed_trace.empty()) {
            save_loss_trace(result.failed_trace, inv.out / dir / "loss_trace.csv.partial");
            manifest.output("failed_loss_trace", dir + "/loss_trace.csv.partial");
        }
        manifest.results()["failure"] = *result.failure;
        manifest.write(inv.out, clock, true);
        log(*result.failure);
        return kNumerical;
    }
    manifest.write(inv.out, clock);
    return kOk;
}

std::vector<double> parse_thresholds(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(cell, &used));
            if (used != cell.size()) throw std::invalid_argument(cell);
        } catch (const std::exception&) {
            throw ConfigError("bad threshold '" + cell + "'");
        }
    }
    if (out.empty()) throw ConfigError("empty threshold list");
    std::sort(out.begin(), out.end());
    return out;
}

/// `points` thresholds evenly spaced over the observed within-group distances,
/// each nudged up so the distance it sits on counts as an edge.
std::vector<double> sweep_thresholds(const DistanceCache& cache, std::size_t points) {
    const auto d = cache.distinct_distances();
    if (d.empty() || points == 0) return {1.0};
    std::vector<double> out;
    for (std::size_t i = 0; i < points; ++i) {
        const double f = points == 1 ? 1.0 : static_cast<double>(i) / static_cast<double>(points - 1);
        out.push_back(std::nextafter(d.front() + f * (d.back() - d.front()), 3.0));
    }
    return out;
}

int cmd_eval_pr(const Invocation& inv) {
    Stopwatch clock;
    Manifest manifest(inv);
    const auto ds = load_input_dataset(inv);
    const auto model = load_input_model(inv, ds);
    clock.lap("load");
    const DistanceCache cache(ds, model, inv.config.workers);
    auto it = inv.options.find("thresholds");
    const auto thresholds = it != inv.options.end() ? parse_thresholds(it->second)
                                                    : sweep_thresholds(cache, inv.config.pr_points);
    const auto curve = pr_curve(cache, ds, inv.config.iterate.clean_params, thresholds, inv.config.workers);
    clock.lap("sweep");
    save_pr_curve(curve, inv.out / "pr_curve.csv");
    manifest.output("pr_curve", "pr_curve.csv");
    manifest.results()["points"] = curve.size();
    manifest.write(inv.out, clock);
    return kOk;
}

int cmd_eval_verify(const Invocation& inv) {
    Stopwatch clock;
    Manifest manifest(inv);
    const auto ds = load_input_dataset(inv);
    const auto model = load_input_model(inv, ds);
    clock.lap("load");
    std::mt19937_64 rng(inv.config.seed);
    const auto pairs = make_pairs(ds, inv.config.verify_pos, inv.config.verify_neg, rng);
    const auto report = verification_accuracy(pairs, model, ds, inv.config.seed);
    clock.lap("verify");
    save_verification_report(report, inv.out / "verification.json");
    {
        std::ofstream f(inv.out / "pairs.jsonl", std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write pairs file");
        for (const auto& p : pairs) f << json{{"a", p.a}, {"b", p.b}, {"same", p.same}}.dump() << '\n';
    }
    manifest.output("verification", "verification.json");
    manifest.output("pairs", "pairs.jsonl");
    manifest.results()["mean_accuracy"] = report.mean_accuracy;
    manifest.write(inv.out, clock);
    log("verification accuracy " + std::to_string(report.mean_accuracy));
    return kOk;
}

int cmd_calibrate(const Invocation& inv) {
    Stopwatch clock;
    Manifest manifest(inv);
    const auto ds = load_input_dataset(inv);
    const auto model = load_input_model(inv, ds);
    clock.lap("load");
    const auto& it = inv.config.iterate;
    const auto cal = calibrate_threshold(model, ds, it.target_precision, it.clean_params, it.calibration_points,
                                         inv.config.workers);
    clock.lap("calibrate");
    save_pr_curve(cal.curve, inv.out / "calibration_pr.csv");
    json summary{{"threshold", cal.threshold},
                 {"target_precision", it.target_precision},
                 {"precision", optional_json(cal.point.precision)},
                 {"recall", optional_json(cal.point.recall)},
                 {"kept_count", cal.point.kept_count}};
    Manifest::write_json(summary, inv.out / "calibration.json");
    manifest.output("calibration", "calibration.json");
    manifest.output("pr_curve", "calibration_pr.csv");
    manifest.results() = summary;
    manifest.write(inv.out, clock);
    log("calibrated T=" + std::to_string(cal.threshold));
    return kOk;
}

int dispatch(const Invocation& inv) {
    std::error_code ec;
    fs::create_directories(inv.out, ec);
    if (ec) throw IoError("cannot create output directory '" + inv.out.string() + "'");
    if (inv.command == "gen") return cmd_gen(inv);
    if (inv.command == "clean") return cmd_clean(inv);
    if (inv.command == "train") return cmd_train(inv);
    if (inv.command == "iterate") return cmd_iterate(inv);
    if (inv.command == "eval-pr") return cmd_eval_pr(inv);
    if (inv.command == "eval-verify") return cmd_eval_verify(inv);
    if (inv.command == "calibrate") return cmd_calibrate(inv);
    throw ConfigError("unknown command '" + inv.command + "'");
}

Invocation from_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
    json m;
    try {
        m = json::parse(in);
        Invocation inv;
        inv.command = m.at("command").get<std::string>();
        inv.config_path = m.at("config_path").get<std::string>();
        inv.config = config_from_json(m.at("config"));
        inv.inputs = m.at("inputs").get<std::map<std::string, std::string>>();
        inv.options = m.at("options").get<std::map<std::string, std::string>>();
        return inv;
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad manifest: ") + e.what(), 1);
    }
}

/// Flags shared by the subcommands.
struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::string out = ".";
    std::map<std::string, std::string> inputs;
    std::optional<double> threshold;
    std::optional<double> target_precision;
    std::optional<std::size_t> max_iterations;
    std::string thresholds;
    std::string manifest;
};

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"Clean weakly labeled identity datasets with match-graph filtering"};
    app.require_subcommand(1);
    Flags flags;

    auto common = [&](CLI::App* sub, bool config_required = false) {
        auto* c = sub->add_option("--config", flags.config, "YAML run configuration");
        if (config_required) c->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", flags.seed, "Seed for every random choice (overrides the config)");
        sub->add_option("--workers", flags.workers, "Filtering threads");
        sub->add_option("--out", flags.out, "Output directory");
    };
    auto input = [&](CLI::App* sub, const std::string& role, const std::string& help) {
        sub->add_option("--" + role, flags.inputs[role], help);
    };

    auto* gen = app.add_subcommand("gen", "Generate a synthetic weakly labeled dataset");
    common(gen, true);

    auto* clean = app.add_subcommand("clean", "Filter every identity at a fixed threshold");
    common(clean);
    input(clean, "dataset", "Dataset (JSONL or CSV)");
    input(clean, "model", "Model JSON (default: identity)");
    input(clean, "embeddings", "Precomputed embeddings JSONL");
    clean->add_option("--threshold", flags.threshold, "Match threshold T");

    auto* train = app.add_subcommand("train", "Train the embedding head with the triplet loss");
    common(train);
    input(train, "dataset", "Dataset");
    input(train, "cleaned", "Restrict training to this cleaned file");
    input(train, "model", "Initial model");
    input(train, "embeddings", "Precomputed embeddings JSONL");

    auto* iterate = app.add_subcommand("iterate", "Run the clean/train/re-clean loop");
    common(iterate);
    input(iterate, "dataset", "Dataset");
    input(iterate, "validation", "Labeled validation set (default: held out from the dataset)");
    input(iterate, "model", "Base model");
    input(iterate, "embeddings", "Precomputed embeddings JSONL");
    iterate->add_option("--max-iterations", flags.max_iterations, "Number of filtering passes");
    iterate->add_option("--target-precision", flags.target_precision, "Calibration target");

    auto* eval_pr = app.add_subcommand("eval-pr", "Precision/recall over a threshold sweep");
    common(eval_pr);
    input(eval_pr, "dataset", "Dataset with truth labels");
    input(eval_pr, "model", "Model");
    input(eval_pr, "embeddings", "Precomputed embeddings JSONL");
    eval_pr->add_option("--thresholds", flags.thresholds, "Comma-separated thresholds");

    auto* eval_verify = app.add_subcommand("eval-verify", "10-fold pair verification accuracy");
    common(eval_verify);
    input(eval_verify, "dataset", "Evaluation dataset with truth labels");
    input(eval_verify, "model", "Model");
    input(eval_verify, "embeddings", "Precomputed embeddings JSONL");

    auto* calibrate = app.add_subcommand("calibrate", "Largest threshold meeting a target precision");
    common(calibrate);
    input(calibrate, "dataset", "Validation dataset with truth labels");
    input(calibrate, "model", "Model");
    input(calibrate, "embeddings", "Precomputed embeddings JSONL");
    calibrate->add_option("--target-precision", flags.target_precision, "Target precision");

    auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
    replay->add_option("--manifest", flags.manifest, "manifest.json of an earlier run")->required();
    replay->add_option("--out", flags.out, "Output directory");

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        Invocation inv;
        if (replay->parsed()) {
            inv = from_manifest(flags.manifest);
        } else {
            inv.command = app.get_subcommands().front()->get_name();
            inv.config_path = flags.config;
            inv.config = flags.config.empty() ? config_from_json(nullptr) : load_config(flags.config);
            if (flags.seed) inv.config.seed = *flags.seed;
            if (flags.workers) inv.config.workers = *flags.workers;
            if (flags.threshold) inv.config.iterate.clean_params.threshold = *flags.threshold;
            if (flags.target_precision) inv.config.iterate.target_precision = *flags.target_precision;
            if (flags.max_iterations) inv.config.iterate.max_iterations = *flags.max_iterations;
            inv.config.propagate();
            inv.config.validate();
            for (const auto& [role, path] : flags.inputs) {
                if (!path.empty()) inv.inputs[role] = path;
            }
            if (!flags.thresholds.empty()) inv.options["thresholds"] = flags.thresholds;
        }
        inv.out = flags.out;
        return dispatch(inv);
    } catch (const std::exception& e) {
        log(std::string("error: ") + e.what());
        return exit_code_for(e);
    }
}

}  // namespace wlclean::cli
