#pragma once

#include "wlclean/dataset.hpp"
#include "wlclean/embed.hpp"
#include "wlclean/errors.hpp"
#include "wlclean/match_graph.hpp"
#include "wlclean/metrics.hpp"
#include "wlclean/triplet.hpp"

#include <optional>
#include <string>
#include <vector>

namespace wlclean {

struct PcaOptions {
    bool enabled = true;
    /// 0 picks min(32, head output dimension).
    std::size_t dim = 0;
    /// Refit after every training round; otherwise the first fit is kept.
    bool refit = true;
    /// Filter with post-PCA embeddings; otherwise PCA is only used for
    /// verification.
    bool use_for_filtering = true;
};

struct IterationConfig {
    std::size_t max_iterations = 2;
    double target_precision = 0.99;
    /// An iteration whose recall gain over the previous one falls below this
    /// is discarded and the loop stops.
    double min_recall_gain = 0.0;
    CleanParams clean_params{1.0, 1, ComponentRule::anchor};
    TrainConfig train_config;
    PcaOptions pca;
    /// Number of candidate thresholds in a calibration sweep; 0 tries every
    /// distinct validation distance.
    std::size_t calibration_points = 512;
    std::size_t workers = 1;

    void validate() const;
};

/// No swept threshold reached the target precision.
class CalibrationError : public NumericalError {
  public:
    CalibrationError(double best_precision, double best_threshold, double target);
    [[nodiscard]] double best_precision() const noexcept { return best_precision_; }
    [[nodiscard]] double best_threshold() const noexcept { return best_threshold_; }

  private:
    double best_precision_;
    double best_threshold_;
};

struct Calibration {
    double threshold = 0.0;
    PrPoint point;               // validation metrics at `threshold`
    std::vector<PrPoint> curve;  // the whole sweep, ascending
};

/// Candidate thresholds over the observed within-group distances of `cache`:
/// each swept distance (edges strictly below it) and one past the maximum.
[[nodiscard]] std::vector<double> candidate_thresholds(const DistanceCache& cache, std::size_t points);

/// Largest swept threshold whose validation precision reaches `target_precision`.
/// `params` supplies min_group_size and the component rule.
[[nodiscard]] Calibration calibrate_threshold(const EmbeddingModel& model, const WeakDataset& validation,
                                              double target_precision, const CleanParams& params,
                                              std::size_t points = 512, std::size_t workers = 1);

struct CleanRun {
    int iteration = 0;
    CleanedDataset cleaned;
    EmbeddingModel model;  // head snapshot plus PCA, as used for this pass
    double threshold = 0.0;
    std::optional<double> precision;  // on the filtered dataset, when it has truth labels
    std::optional<double> recall;
    PrPoint validation_point;
    std::vector<PrPoint> calibration_curve;
    std::vector<LossPoint> loss_trace;  // empty for the first iteration
    std::vector<GroupDiagnostics> diagnostics;
};

struct PipelineResult {
    std::vector<CleanRun> runs;
    /// Why the loop ended before max_iterations, if it did.
    std::optional<std::string> stop_reason;
    /// Set when training collapsed; `runs` holds every completed pass.
    std::optional<std::string> failure;
    std::vector<LossPoint> failed_trace;
    int failed_iteration = 0;
};

/// Model used for filtering at one pipeline stage.
[[nodiscard]] EmbeddingModel filtering_model(const EmbeddingModel& model, const PcaOptions& pca);

/// Iteration 1 filters `ds` with `base_model`; every later iteration trains
/// the head on the previous cleaned subset, refits PCA, recalibrates the
/// threshold on `validation` and re-filters the full `ds`.
[[nodiscard]] PipelineResult run_pipeline(const WeakDataset& ds, const EmbeddingModel& base_model,
                                          const WeakDataset& validation, const IterationConfig& cfg);

}  // namespace wlclean
