#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "otdr/baselines.hpp"
#include "otdr/eval.hpp"

namespace otdr::eval {

/// Accuracy and regression errors per integer ground-truth SNR bin of the
/// corpus test split, with Wilson intervals.
StudyReport run_snr_sweep(const nn::ModelParams& params, const data::Corpus& corpus,
                          double threshold = 0.5);

/// Multitask model vs the three single-task baselines of matched width,
/// trained on the same corpus and seeds; seed-mean metrics plus the
/// per-metric improvement deltas.
StudyReport run_single_vs_multi(const data::Corpus& corpus, const nn::TrainConfig& train,
                                std::array<double, 3> loss_weights, int n_seeds);

/// Re-trains the model per aux feature set descriptor over the same trace
/// grid; seed-mean test accuracy and position error per set.
StudyReport run_feature_ablation(const data::GridConfig& grid, const nn::TrainConfig& train,
                                 std::array<double, 3> loss_weights, int n_seeds,
                                 const std::vector<std::string>& feature_sets);

/// Re-trains at each window length.
StudyReport run_sequence_length(const data::GridConfig& grid, const nn::TrainConfig& train,
                                std::array<double, 3> loss_weights,
                                const std::vector<int>& lengths);

/// Evaluates a trained model on the three out-of-distribution corpora:
/// high SNR (30-40 dB), low reflectance, and two-event windows (position
/// scored against the nearest true event).
StudyReport run_robustness(const nn::ModelParams& params, const data::GridConfig& base_grid);

struct CompareSpec {
    std::vector<int> snr_bins_db = {2, 3, 4, 5, 6, 8, 10, 12, 15, 20};
    int windows_per_bin = 400;
    int pulse_width_samples = 6;
    int ml_window_len = 35;
    int baseline_window_len = 35;  // equal to ml_window_len pairs the draws
    int two_point_half_width = 5;
    double target_pfa = 0.1;
    int n_calibration_windows = 2000;
    double sampling_interval_m = 0.8;

    // Averaging-time curve: SNR at n_avg = 1 grows by 5*log10(n_avg) dB.
    std::vector<double> n_avg_sweep = {1,   2,   3,   4,   5,    6,    8,    12,   16,   24,
                                       32,  48,  64,  96,  128,  192,  256,  384,  512,  768,
                                       1024, 1536, 2048, 3072, 4096};
    double snr_at_navg1_db = 0.0;
    double fiber_length_m = 8785.0;
    double refractive_index = 1.468;

    std::uint64_t seed = 99;
};

/// ML model vs R1MSDE and the two-point method on complete-event windows:
/// per-SNR P_d at calibrated P_FA, per-SNR position RMSE, and the accuracy
/// vs averaging-time curve.
StudyReport compare_detectors(const nn::ModelParams& params, const CompareSpec& spec);

/// JSON-spec'd dispatcher behind the `study` CLI subcommand.
StudyReport run_study(const std::string& kind, const nlohmann::json& spec);

data::GridConfig grid_from_json(const nlohmann::json& spec);
nn::TrainConfig train_config_from_json(const nlohmann::json& spec);

}  // namespace otdr::eval
