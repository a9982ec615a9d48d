#include "wlclean/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace wlclean {

void IterationConfig::validate() const {
    if (max_iterations < 1) throw ConfigError("max_iterations must be at least 1");
    if (!(target_precision > 0.0 && target_precision <= 1.0)) {
        throw ConfigError("target_precision must be in (0, 1]");
    }
    if (!(min_recall_gain >= 0.0)) throw ConfigError("min_recall_gain must be non-negative");
    if (clean_params.min_group_size < 1) throw ConfigError("min_group_size must be at least 1");
    if (max_iterations > 1) train_config.validate();
    if (workers < 1) throw ConfigError("workers must be at least 1");
}

namespace {

std::string describe(double v) {
    std::ostringstream s;
    s.precision(6);
    s << v;
    return s.str();
}

}  // namespace

CalibrationError::CalibrationError(double best_precision, double best_threshold, double target)
    : NumericalError("no threshold reaches precision " + describe(target) + "; best is " +
                     describe(best_precision) + " at T=" + describe(best_threshold)),
      best_precision_(best_precision),
      best_threshold_(best_threshold) {}

std::vector<double> candidate_thresholds(const DistanceCache& cache, std::size_t points) {
    // Edges need d < T, so T = d_i keeps exactly the edges below d_i: the
    // largest threshold giving that graph. One more past the maximum keeps all.
    const auto distances = cache.distinct_distances();
    if (distances.empty()) return {1.0};
    std::vector<double> out;
    auto add = [&](double t) {
        if (t > 0.0) out.push_back(t);
    };
    if (points == 0 || distances.size() <= points) {
        for (double d : distances) add(d);
    } else {
        const auto last = distances.size() - 1;
        for (std::size_t i = 0; i < points; ++i) {
            const auto idx = points == 1 ? last : (i * last + (points - 1) / 2) / (points - 1);
            add(distances[idx]);
        }
    }
    add(std::nextafter(distances.back(), 3.0));
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

Calibration calibrate_threshold(const EmbeddingModel& model, const WeakDataset& validation, double target_precision,
                                const CleanParams& params, std::size_t points, std::size_t workers) {
    if (!(target_precision > 0.0 && target_precision <= 1.0)) {
        throw ConfigError("target_precision must be in (0, 1]");
    }
    if (!validation.has_truth()) {
        throw IntegrityError("calibration needs truth labels on every validation record");
    }
    const DistanceCache cache(validation, model, workers);
    Calibration cal;
    cal.curve = pr_curve(cache, validation, params, candidate_thresholds(cache, points), workers);

    std::optional<std::size_t> chosen;
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < cal.curve.size(); ++i) {
        const auto& p = cal.curve[i].precision;
        if (!p) continue;
        if (*p >= target_precision) chosen = i;
        if (!best || *p > *cal.curve[*best].precision) best = i;
    }
    if (!chosen) {
        throw CalibrationError(best ? *cal.curve[*best].precision : 0.0, best ? cal.curve[*best].threshold : 0.0,
                               target_precision);
    }
    cal.threshold = cal.curve[*chosen].threshold;
    cal.point = cal.curve[*chosen];
    return cal;
}

EmbeddingModel filtering_model(const EmbeddingModel& model, const PcaOptions& pca) {
    return pca.use_for_filtering ? model : model.with_pca(std::nullopt);
}

namespace {

PcaTransform fit_head_pca(const EmbeddingModel& model, const WeakDataset& cleaned, const PcaOptions& opts) {
    const auto e = model.head_dim();
    const auto k = std::min(opts.dim == 0 ? std::min<std::size_t>(32, e) : opts.dim, e);
    Matrix samples(static_cast<Eigen::Index>(cleaned.size()), static_cast<Eigen::Index>(e));
    for (std::size_t i = 0; i < cleaned.size(); ++i) {
        samples.row(static_cast<Eigen::Index>(i)) = model.head_output(cleaned.records()[i].features).transpose();
    }
    return pca_fit(samples, k);
}

// Recall used for the early-stop rule: on the filtered data when it carries
// truth labels, on the validation set otherwise.
std::optional<double> progress_recall(const CleanRun& run) {
    return run.recall ? run.recall : run.validation_point.recall;
}

}  // namespace

PipelineResult run_pipeline(const WeakDataset& ds, const EmbeddingModel& base_model, const WeakDataset& validation,
                            const IterationConfig& cfg) {
    cfg.validate();
    for (const auto& label : validation.labels()) {
        if (ds.groups().count(label)) {
            throw IntegrityError("validation label '" + label + "' also appears in the training data");
        }
    }

    PipelineResult result;
    EmbeddingModel model = base_model;
    for (std::size_t it = 1; it <= cfg.max_iterations; ++it) {
        const int iteration = static_cast<int>(it);
        CleanRun run;
        run.iteration = iteration;

        if (it > 1) {
            const auto& prev = result.runs.back();
            const auto train_ds = restrict_to(ds, prev.cleaned);
            TrainConfig tc = cfg.train_config;
            tc.seed = cfg.train_config.seed + it - 1;
            std::vector<LossPoint> trace;
            try {
                auto trained = train_head(train_ds, model.with_pca(std::nullopt), tc,
                                          [&](const LossPoint& p) { trace.push_back(p); });
                model = trained.model.with_pca(model.pca());
            } catch (const TrainingCollapse& e) {
                result.failure = e.what();
                result.failed_trace = std::move(trace);
                result.failed_iteration = iteration;
                return result;
            }
            run.loss_trace = std::move(trace);
            if (cfg.pca.enabled && (cfg.pca.refit || !model.pca())) {
                model = model.with_pca(fit_head_pca(model, train_ds, cfg.pca));
            }
        }

        const auto filter = filtering_model(model, cfg.pca);
        Calibration cal;
        try {
            cal = calibrate_threshold(filter, validation, cfg.target_precision, cfg.clean_params,
                                      cfg.calibration_points, cfg.workers);
        } catch (const NumericalError& e) {
            if (result.runs.empty()) throw;
            result.failure = e.what();
            result.failed_iteration = iteration;
            return result;
        }
        CleanParams params = cfg.clean_params;
        params.threshold = cal.threshold;
        auto out = clean_dataset_with_diagnostics(ds, filter, params, cfg.workers, iteration);

        run.cleaned = std::move(out.cleaned);
        run.diagnostics = std::move(out.diagnostics);
        run.model = model;
        run.threshold = cal.threshold;
        run.validation_point = cal.point;
        run.calibration_curve = std::move(cal.curve);
        if (ds.has_truth()) {
            const auto pr = precision_recall(run.cleaned, ds);
            run.precision = pr.precision;
            run.recall = pr.recall;
        }

        if (!result.runs.empty()) {
            const auto before = progress_recall(result.runs.back()).value_or(0.0);
            const auto after = progress_recall(run).value_or(0.0);
            if (after - before < cfg.min_recall_gain) {
                result.stop_reason = "iteration " + std::to_string(iteration) + " recall gain " +
                                     describe(after - before) + " below min_recall_gain " +
                                     describe(cfg.min_recall_gain);
                return result;
            }
        }
        result.runs.push_back(std::move(run));
    }
    return result;
}

}  // namespace wlclean
