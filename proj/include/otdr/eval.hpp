#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "otdr/dataset.hpp"
#include "otdr/nn.hpp"

namespace otdr::eval {

struct ConfusionCounts {
    long n_tp = 0;
    long n_tn = 0;
    long n_fp = 0;
    long n_fn = 0;

    long total() const { return n_tp + n_tn + n_fp + n_fn; }
    void add(bool truth_positive, bool predicted_positive);
};

/// Classification and regression scores; a field is empty when its
/// denominator was zero (undefined, not 0).
struct Metrics {
    std::optional<double> accuracy, precision, recall, f1;
    std::optional<std::pair<double, double>> accuracy_interval;  // Wilson
    std::optional<double> rmse_position_m, mae_position_m;
    std::optional<double> rmse_reflectance_db, mae_reflectance_db;
};

Metrics classification_metrics(const ConfusionCounts& counts);

/// Wilson score interval for `successes` out of `trials` at critical value z.
std::pair<double, double> wilson_interval(long successes, long trials, double z = 1.96);

/// (rmse, mae) over paired predictions and truths.
std::pair<double, double> regression_metrics(std::span<const double> pred,
                                             std::span<const double> truth);

struct DetectionRates {
    std::optional<double> p_d;
    std::optional<double> p_fa;
};

DetectionRates detection_rates(const ConfusionCounts& counts);

/// Rate metrics (accuracy, recall, ...): percentage-point difference
/// multi - single.
std::optional<double> improvement_delta_rate(std::optional<double> multi,
                                             std::optional<double> single_task);
/// Error metrics (RMSE, MAE): 1 - multi/single.
std::optional<double> improvement_delta_error(std::optional<double> multi,
                                              std::optional<double> single_task);

/// One sweep point of a study; values keyed by metric name.
struct StudyRow {
    double axis = 0.0;
    std::string label;
    std::map<std::string, double> values;
};

struct StudyReport {
    std::string kind;
    std::vector<StudyRow> rows;
    nlohmann::json manifest;

    /// Writes <basename>.csv (one row per sweep point per metric) and
    /// <basename>.json (the manifest).
    void save(const std::string& basename) const;
};

/// Full-model evaluation on one corpus split: confusion at the given
/// p_event threshold plus position/reflectance errors de-normalized to
/// meters and dB, computed over every labeled-positive window.
Metrics evaluate_model(const nn::ModelParams& params, const data::Corpus& corpus, int split,
                       double threshold = 0.5, double sampling_interval_m = 0.8);

/// Same, stratified by integer ground-truth SNR bin.
std::map<int, Metrics> evaluate_by_snr_bin(const nn::ModelParams& params,
                                           const data::Corpus& corpus, int split,
                                           double threshold = 0.5,
                                           double sampling_interval_m = 0.8);

}  // namespace otdr::eval
