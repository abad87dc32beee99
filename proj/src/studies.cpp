#include "otdr/studies.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "otdr/trace_sim.hpp"

namespace otdr::eval {

using data::Corpus;
using data::FeatureSet;
using data::GridConfig;
using nn::ModelParams;
using nn::TrainConfig;
using nlohmann::json;

namespace {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

void put_mean_std(StudyRow& row, const std::string& name, const std::vector<double>& v) {
    if (v.empty()) return;
    row.values[name] = mean_of(v);
    row.values[name + "_std"] = std_of(v);
}

}  // namespace

StudyReport run_snr_sweep(const ModelParams& params, const Corpus& corpus, double threshold) {
    StudyReport report;
    report.kind = "snr_sweep";
    report.manifest["threshold"] = threshold;
    report.manifest["feature_set"] = corpus.feature_set.descriptor();

    const auto bins = evaluate_by_snr_bin(params, corpus, 2, threshold);
    for (const auto& [bin, m] : bins) {
        StudyRow row;
        row.axis = bin;
        row.label = "snr_bin";
        if (m.accuracy) row.values["accuracy"] = *m.accuracy;
        if (m.accuracy_interval) {
            row.values["accuracy_wilson_lo"] = m.accuracy_interval->first;
            row.values["accuracy_wilson_hi"] = m.accuracy_interval->second;
        }
        if (m.rmse_position_m) row.values["rmse_position_m"] = *m.rmse_position_m;
        if (m.rmse_reflectance_db) row.values["rmse_reflectance_db"] = *m.rmse_reflectance_db;
        report.rows.push_back(std::move(row));
    }
    return report;
}

StudyReport run_single_vs_multi(const Corpus& corpus, const TrainConfig& train,
                                std::array<double, 3> loss_weights, int n_seeds) {
    StudyReport report;
    report.kind = "single_vs_multi";
    report.manifest["n_seeds"] = n_seeds;
    report.manifest["loss_weights"] = loss_weights;

    nn::ArchSpec base_arch;
    base_arch.aux_width = corpus.feature_set.size();
    base_arch.feature_set = corpus.feature_set.descriptor();

    struct Accum {
        std::vector<double> accuracy, precision, recall, f1;
        std::vector<double> rmse_pos, mae_pos, rmse_refl, mae_refl;
        void absorb(const Metrics& m) {
            if (m.accuracy) accuracy.push_back(*m.accuracy);
            if (m.precision) precision.push_back(*m.precision);
            if (m.recall) recall.push_back(*m.recall);
            if (m.f1) f1.push_back(*m.f1);
            if (m.rmse_position_m) rmse_pos.push_back(*m.rmse_position_m);
            if (m.mae_position_m) mae_pos.push_back(*m.mae_position_m);
            if (m.rmse_reflectance_db) rmse_refl.push_back(*m.rmse_reflectance_db);
            if (m.mae_reflectance_db) mae_refl.push_back(*m.mae_reflectance_db);
        }
    };
    Accum multi, single;

    for (int s = 0; s < n_seeds; ++s) {
        TrainConfig cfg = train;
        cfg.seed = train.seed + static_cast<std::uint64_t>(s);

        nn::ArchSpec arch = base_arch;
        multi.absorb(evaluate_model(
            nn::train_model(corpus, arch, loss_weights, cfg).params, corpus, 2));

        for (int task = 0; task < 3; ++task) {
            nn::ArchSpec st = base_arch;
            st.tasks = {task == 0, task == 1, task == 2};
            std::array<double, 3> w = {0.0, 0.0, 0.0};
            w[static_cast<std::size_t>(task)] = 1.0;
            single.absorb(evaluate_model(
                nn::train_model(corpus, st, w, cfg).params, corpus, 2));
        }
    }

    auto emit = [&report](const std::string& label, const Accum& a) {
        StudyRow row;
        row.label = label;
        put_mean_std(row, "accuracy", a.accuracy);
        put_mean_std(row, "precision", a.precision);
        put_mean_std(row, "recall", a.recall);
        put_mean_std(row, "f1", a.f1);
        put_mean_std(row, "rmse_position_m", a.rmse_pos);
        put_mean_std(row, "mae_position_m", a.mae_pos);
        put_mean_std(row, "rmse_reflectance_db", a.rmse_refl);
        put_mean_std(row, "mae_reflectance_db", a.mae_refl);
        report.rows.push_back(std::move(row));
    };
    emit("multitask", multi);
    emit("single_task", single);

    StudyRow delta;
    delta.label = "delta";
    auto rate_delta = [](const std::vector<double>& m, const std::vector<double>& s) {
        return mean_of(m) - mean_of(s);
    };
    auto error_delta = [](const std::vector<double>& m, const std::vector<double>& s) {
        return 1.0 - mean_of(m) / mean_of(s);
    };
    if (!multi.accuracy.empty()) delta.values["accuracy"] = rate_delta(multi.accuracy, single.accuracy);
    if (!multi.f1.empty()) delta.values["f1"] = rate_delta(multi.f1, single.f1);
    if (!multi.rmse_pos.empty())
        delta.values["rmse_position_m"] = error_delta(multi.rmse_pos, single.rmse_pos);
    if (!multi.rmse_refl.empty())
        delta.values["rmse_reflectance_db"] = error_delta(multi.rmse_refl, single.rmse_refl);
    report.rows.push_back(std::move(delta));
    return report;
}

StudyReport run_feature_ablation(const GridConfig& grid, const TrainConfig& train,
                                 std::array<double, 3> loss_weights, int n_seeds,
                                 const std::vector<std::string>& feature_sets) {
    StudyReport report;
    report.kind = "feature_ablation";
    report.manifest["n_seeds"] = n_seeds;
    report.manifest["feature_sets"] = feature_sets;
    report.manifest["grid_seed"] = grid.seed;

    double axis = 0.0;
    for (const auto& descriptor : feature_sets) {
        const FeatureSet fs = FeatureSet::parse(descriptor);
        const Corpus corpus = data::build_corpus(grid, fs);

        nn::ArchSpec arch;
        arch.aux_width = fs.size();
        arch.feature_set = descriptor;

        std::vector<double> accuracy, rmse_pos;
        for (int s = 0; s < n_seeds; ++s) {
            TrainConfig cfg = train;
            cfg.seed = train.seed + static_cast<std::uint64_t>(s);
            const Metrics m = evaluate_model(
                nn::train_model(corpus, arch, loss_weights, cfg).params, corpus, 2);
            if (m.accuracy) accuracy.push_back(*m.accuracy);
            if (m.rmse_position_m) rmse_pos.push_back(*m.rmse_position_m);
        }
        StudyRow row;
        row.axis = axis++;
        row.label = descriptor;
        put_mean_std(row, "accuracy", accuracy);
        put_mean_std(row, "rmse_position_m", rmse_pos);
        report.rows.push_back(std::move(row));
    }
    return report;
}

StudyReport run_sequence_length(const GridConfig& grid, const TrainConfig& train,
                                std::array<double, 3> loss_weights,
                                const std::vector<int>& lengths) {
    StudyReport report;
    report.kind = "sequence_length";
    report.manifest["lengths"] = lengths;

    for (int window_len : lengths) {
        GridConfig g = grid;
        g.window_len = window_len;
        const Corpus corpus = data::build_corpus(g, FeatureSet{});

        nn::ArchSpec arch;
        const Metrics m = evaluate_model(
            nn::train_model(corpus, arch, loss_weights, train).params, corpus, 2);

        StudyRow row;
        row.axis = window_len;
        row.label = "window_len";
        if (m.accuracy) row.values["accuracy"] = *m.accuracy;
        if (m.rmse_position_m) row.values["rmse_position_m"] = *m.rmse_position_m;
        if (m.rmse_reflectance_db) row.values["rmse_reflectance_db"] = *m.rmse_reflectance_db;
        report.rows.push_back(std::move(row));
    }
    return report;
}

namespace {

/// Two-event evaluation with localization scored against the nearest
/// in-window ground-truth event.
StudyRow evaluate_two_event(const ModelParams& params, const GridConfig& grid) {
    Corpus corpus;
    corpus.feature_set = FeatureSet::parse(params.arch.feature_set);
    corpus.window_len = grid.window_len;
    std::vector<std::vector<double>> truth_rel_indices;  // per sample, window-relative

    for (int i = 0; i < grid.n_traces; ++i) {
        auto [config, events] = data::sample_grid_point(grid, i);
        const auto trace = sim::synthesize_trace(config, events);
        auto [positive, negative] = data::extract_training_windows(
            trace, grid.window_len, mix64(grid.seed ^ 0x5bf03635ULL) ^ mix64(i),
            corpus.feature_set);

        std::vector<double> in_window;
        for (const auto& e : trace.events) {
            const auto rel = e.position_index - positive.window_origin;
            if (rel >= 0 && rel < grid.window_len)
                in_window.push_back(static_cast<double>(rel));
        }
        corpus.samples.push_back(std::move(positive));
        truth_rel_indices.push_back(std::move(in_window));
        corpus.samples.push_back(std::move(negative));
        truth_rel_indices.emplace_back();
    }

    std::vector<std::size_t> indices(corpus.samples.size());
    std::iota(indices.begin(), indices.end(), 0);
    const nn::BatchOutput out = nn::predict_corpus(params, corpus, indices);

    ConfusionCounts counts;
    double sum_sq = 0.0;
    long n_pos = 0;
    const double dx = grid.base.sampling_interval_m;
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const bool truth = corpus.samples[i].id_class == 1;
        counts.add(truth, out.p_event[static_cast<Eigen::Index>(i)] > 0.5);
        if (!truth || truth_rel_indices[i].empty()) continue;
        const double pred_rel =
            out.position[static_cast<Eigen::Index>(i)] * (grid.window_len - 1);
        double best = std::numeric_limits<double>::infinity();
        for (double rel : truth_rel_indices[i])
            best = std::min(best, std::abs(pred_rel - rel) * dx);
        sum_sq += best * best;
        ++n_pos;
    }

    StudyRow row;
    row.label = "two_event";
    row.values["accuracy"] = *classification_metrics(counts).accuracy;
    if (n_pos > 0)
        row.values["rmse_position_m"] = std::sqrt(sum_sq / static_cast<double>(n_pos));
    return row;
}

}  // namespace

StudyReport run_robustness(const ModelParams& params, const GridConfig& base_grid) {
    StudyReport report;
    report.kind = "robustness";
    report.manifest["base_grid_seed"] = base_grid.seed;

    const FeatureSet fs = FeatureSet::parse(params.arch.feature_set);
    auto evaluate_scenario = [&](const std::string& label, const GridConfig& grid) {
        const Corpus corpus = data::build_corpus(grid, fs);
        const Metrics m = evaluate_model(params, corpus, -1, 0.5,
                                         grid.base.sampling_interval_m);
        StudyRow row;
        row.label = label;
        if (m.accuracy) row.values["accuracy"] = *m.accuracy;
        if (m.rmse_position_m) row.values["rmse_position_m"] = *m.rmse_position_m;
        if (m.rmse_reflectance_db) row.values["rmse_reflectance_db"] = *m.rmse_reflectance_db;
        report.rows.push_back(std::move(row));
    };

    GridConfig high_snr = base_grid;
    high_snr.seed = mix64(base_grid.seed ^ 0x68736e72ULL);
    high_snr.snr_min_db = 30.0;
    high_snr.snr_max_db = 40.0;
    evaluate_scenario("high_snr", high_snr);

    GridConfig low_reflectance = base_grid;
    low_reflectance.seed = mix64(base_grid.seed ^ 0x6c6f7265ULL);
    low_reflectance.reflectance_min_db = -65.0;
    low_reflectance.reflectance_max_db = -55.0;
    evaluate_scenario("low_reflectance", low_reflectance);

    GridConfig two_event = base_grid;
    two_event.seed = mix64(base_grid.seed ^ 0x74776f65ULL);
    two_event.max_events = 2;
    report.rows.push_back(evaluate_two_event(params, two_event));
    return report;
}

// ---------------------------------------------------------------------------
// Detector comparison

namespace {

std::vector<double> noise_window(int len, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> w(static_cast<std::size_t>(len));
    for (double& x : w) x = noise(rng);
    return w;
}

/// Rectangular event of the given amplitude (noise std is 1) intersecting
/// the window in at least one sample, as produced by the sliding-window
/// segmentation: the pulse may straddle either edge. Returns the pulse start
/// clamped to the window frame (the position-target convention) through
/// `origin_out`.
std::vector<double> event_window(int len, int pw, double amplitude, std::uint64_t seed,
                                 int* origin_out) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> origin_dist(-(pw - 1), len - 1);
    const int origin = origin_dist(rng);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> w(static_cast<std::size_t>(len));
    for (double& x : w) x = noise(rng);
    for (int i = std::max(origin, 0); i < std::min(origin + pw, len); ++i)
        w[static_cast<std::size_t>(i)] += amplitude;
    if (origin_out) *origin_out = std::clamp(origin, 0, len - 1);
    return w;
}

// For gamma-aware models the statistic carries the SNR of the acquisition
// setting the window came from, matching how the aux feature is attached to
// corpus samples.
double ml_statistic(const ModelParams& params, std::span<const double> window,
                    double gamma_db) {
    data::WindowSample sample;
    sample.features = data::normalize_window(window);
    if (params.arch.aux_width == 1) sample.aux = {gamma_db / data::kAuxSnrScaleDb};
    return nn::model_forward(sample, params).p_event;
}

double held_out_pfa(const detect::StatisticFn& stat, int len, double threshold, int n,
                    std::uint64_t seed) {
    int alarms = 0;
    for (int i = 0; i < n; ++i)
        if (stat(noise_window(len, mix64(seed) ^ mix64(static_cast<std::uint64_t>(i)))) >
            threshold)
            ++alarms;
    return static_cast<double>(alarms) / n;
}

// One detection threshold for the whole sweep: noise windows are drawn
// across the sweep's acquisition settings in equal shares and the threshold
// is the (1 - pfa) quantile of the pooled statistic, mirroring how the
// scale-invariant baselines are calibrated once for all settings.
std::vector<double> ml_noise_stats(const ModelParams& params, std::span<const double> gammas,
                                   int len, int n, std::uint64_t salt) {
    std::vector<double> stats(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const auto w = noise_window(len, mix64(salt) ^ mix64(static_cast<std::uint64_t>(i)));
        stats[static_cast<std::size_t>(i)] =
            ml_statistic(params, w, gammas[static_cast<std::size_t>(i) % gammas.size()]);
    }
    return stats;
}

double ml_mixed_threshold(const ModelParams& params, std::span<const double> gammas, int len,
                          double target_pfa, int n, std::uint64_t salt) {
    auto stats = ml_noise_stats(params, gammas, len, n, salt);
    std::sort(stats.begin(), stats.end());
    if (stats.front() == stats.back())
        throw detect::CalibrationFailure("degenerate model statistic during calibration");
    auto rank =
        static_cast<std::size_t>(std::floor((1.0 - target_pfa) * static_cast<double>(n)));
    rank = std::min(rank, stats.size() - 1);
    return stats[rank];
}

double ml_mixed_pfa(const ModelParams& params, std::span<const double> gammas, int len,
                    double threshold, int n, std::uint64_t salt) {
    const auto stats = ml_noise_stats(params, gammas, len, n, salt);
    int alarms = 0;
    for (double s : stats)
        if (s > threshold) ++alarms;
    return static_cast<double>(alarms) / n;
}

}  // namespace

StudyReport compare_detectors(const ModelParams& params, const CompareSpec& spec) {
    if (params.arch.aux_width != 0 && params.arch.feature_set != "snr")
        throw std::invalid_argument(
            "detector comparison supports aux-free and gamma-only models");
    if (!params.arch.tasks[nn::kTaskDetection])
        throw std::invalid_argument("detector comparison requires the detection head");

    StudyReport report;
    report.kind = "compare";
    report.manifest["target_pfa"] = spec.target_pfa;
    report.manifest["windows_per_bin"] = spec.windows_per_bin;
    report.manifest["baseline_window_len"] = spec.baseline_window_len;
    report.manifest["ml_window_len"] = spec.ml_window_len;
    report.manifest["seed"] = spec.seed;

    const int pw = spec.pulse_width_samples;
    auto ml_stat_at = [&params](double gamma_db) {
        return detect::StatisticFn([&params, gamma_db](std::span<const double> w) {
            return ml_statistic(params, w, gamma_db);
        });
    };
    const detect::StatisticFn r1_stat = [pw](std::span<const double> w) {
        return detect::r1msde_statistic(w, pw);
    };
    const detect::StatisticFn tp_stat = [&spec](std::span<const double> w) {
        return detect::two_point_statistic(w, spec.two_point_half_width);
    };

    auto calibrate = [&spec](const detect::StatisticFn& stat, int len, std::uint64_t salt) {
        return detect::calibrate_threshold(
            stat,
            [len, salt](std::uint64_t i) { return noise_window(len, mix64(salt) ^ mix64(i)); },
            spec.target_pfa, spec.n_calibration_windows);
    };
    std::vector<double> bin_gammas;
    for (int snr_db : spec.snr_bins_db) bin_gammas.push_back(snr_db);
    const double ml_threshold = ml_mixed_threshold(params, bin_gammas, spec.ml_window_len,
                                                   spec.target_pfa,
                                                   spec.n_calibration_windows, spec.seed ^ 1);
    const double r1_threshold = calibrate(r1_stat, spec.baseline_window_len, spec.seed ^ 2);
    const double tp_threshold = calibrate(tp_stat, spec.baseline_window_len, spec.seed ^ 3);
    report.manifest["thresholds"] = {
        {"ml", ml_threshold}, {"r1msde", r1_threshold}, {"two_point", tp_threshold}};

    // Held-out false-alarm check on fresh noise windows.
    report.manifest["held_out_pfa"] = {
        {"ml", ml_mixed_pfa(params, bin_gammas, spec.ml_window_len, ml_threshold,
                            spec.n_calibration_windows, spec.seed ^ 11)},
        {"r1msde", held_out_pfa(r1_stat, spec.baseline_window_len, r1_threshold,
                                spec.n_calibration_windows, spec.seed ^ 12)},
        {"two_point", held_out_pfa(tp_stat, spec.baseline_window_len, tp_threshold,
                                   spec.n_calibration_windows, spec.seed ^ 13)}};

    const double dx = spec.sampling_interval_m;
    for (int snr_db : spec.snr_bins_db) {
        const double amplitude = std::pow(10.0, snr_db / 10.0);
        int ml_hits = 0, r1_hits = 0, tp_hits = 0;
        double ml_sq = 0.0, r1_sq = 0.0, tp_sq = 0.0;
        for (int i = 0; i < spec.windows_per_bin; ++i) {
            const std::uint64_t salt =
                mix64(spec.seed ^ 0xb1000000ULL ^ static_cast<std::uint64_t>(snr_db)) ^
                mix64(static_cast<std::uint64_t>(i));

            int origin = 0;
            const auto ml_window =
                event_window(spec.ml_window_len, pw, amplitude, salt ^ 0xAAULL, &origin);
            data::WindowSample sample;
            sample.features = data::normalize_window(ml_window);
            if (params.arch.aux_width == 1)
                sample.aux = {snr_db / data::kAuxSnrScaleDb};
            const nn::Prediction pred = nn::model_forward(sample, params);
            if (pred.p_event > ml_threshold) ++ml_hits;
            const double ml_err =
                (pred.position * (spec.ml_window_len - 1) - origin) * dx;
            ml_sq += ml_err * ml_err;

            // Baselines score the same realization when the window lengths
            // agree (paired comparison), a fresh draw otherwise.
            const auto base_window =
                spec.baseline_window_len == spec.ml_window_len
                    ? ml_window
                    : event_window(spec.baseline_window_len, pw, amplitude, salt ^ 0xBBULL,
                                   &origin);
            const auto r1 = detect::r1msde_detect(base_window, pw, r1_threshold);
            if (r1.detected) ++r1_hits;
            const double r1_err = (r1.position_index - origin) * dx;
            r1_sq += r1_err * r1_err;

            const auto tp = detect::two_point_detect(base_window, spec.two_point_half_width,
                                                     tp_threshold);
            if (tp.detected) ++tp_hits;
            const double tp_err = (tp.position_index - origin) * dx;
            tp_sq += tp_err * tp_err;
        }
        const double n = spec.windows_per_bin;
        auto emit = [&](const std::string& label, int hits, double sq) {
            StudyRow row;
            row.axis = snr_db;
            row.label = label;
            row.values["p_d"] = hits / n;
            const auto wilson = wilson_interval(hits, spec.windows_per_bin);
            row.values["p_d_wilson_lo"] = wilson.first;
            row.values["p_d_wilson_hi"] = wilson.second;
            row.values["rmse_position_m"] = std::sqrt(sq / n);
            report.rows.push_back(std::move(row));
        };
        emit("ml", ml_hits, ml_sq);
        emit("r1msde", r1_hits, r1_sq);
        emit("two_point", tp_hits, tp_sq);
    }

    // Accuracy vs averaging time on balanced event/noise windows.
    const double base_amplitude = std::pow(10.0, spec.snr_at_navg1_db / 10.0);
    double ml_navg_90 = -1.0, r1_navg_90 = -1.0;
    std::vector<double> sweep_gammas;
    for (double n_avg : spec.n_avg_sweep)
        sweep_gammas.push_back(spec.snr_at_navg1_db + 5.0 * std::log10(n_avg));
    const double ml_sweep_threshold =
        ml_mixed_threshold(params, sweep_gammas, spec.ml_window_len, spec.target_pfa,
                           spec.n_calibration_windows, spec.seed ^ 21);
    for (double n_avg : spec.n_avg_sweep) {
        const double amplitude = base_amplitude * std::sqrt(n_avg);
        const double gamma_db = 10.0 * std::log10(amplitude);
        const double tau =
            sim::averaging_time(n_avg, spec.fiber_length_m, spec.refractive_index);
        const detect::StatisticFn ml_stat = ml_stat_at(gamma_db);
        const double ml_threshold = ml_sweep_threshold;

        int ml_correct = 0, r1_correct = 0;
        for (int i = 0; i < spec.windows_per_bin; ++i) {
            const std::uint64_t salt =
                mix64(spec.seed ^ 0xA7000000ULL ^ static_cast<std::uint64_t>(n_avg)) ^
                mix64(static_cast<std::uint64_t>(i));
            const auto ml_event =
                event_window(spec.ml_window_len, pw, amplitude, salt ^ 0x10ULL, nullptr);
            const auto ml_noise = noise_window(spec.ml_window_len, salt ^ 0x20ULL);
            if (ml_stat(ml_event) > ml_threshold) ++ml_correct;
            if (!(ml_stat(ml_noise) > ml_threshold)) ++ml_correct;

            const auto r1_event =
                spec.baseline_window_len == spec.ml_window_len
                    ? ml_event
                    : event_window(spec.baseline_window_len, pw, amplitude, salt ^ 0x30ULL,
                                   nullptr);
            const auto r1_noise = spec.baseline_window_len == spec.ml_window_len
                                      ? ml_noise
                                      : noise_window(spec.baseline_window_len, salt ^ 0x40ULL);
            if (r1_stat(r1_event) > r1_threshold) ++r1_correct;
            if (!(r1_stat(r1_noise) > r1_threshold)) ++r1_correct;
        }
        const double ml_accuracy = ml_correct / (2.0 * spec.windows_per_bin);
        const double r1_accuracy = r1_correct / (2.0 * spec.windows_per_bin);
        if (ml_navg_90 < 0.0 && ml_accuracy >= 0.9) ml_navg_90 = n_avg;
        if (r1_navg_90 < 0.0 && r1_accuracy >= 0.9) r1_navg_90 = n_avg;

        StudyRow ml_row;
        ml_row.axis = tau;
        ml_row.label = "ml_time";
        ml_row.values["accuracy"] = ml_accuracy;
        ml_row.values["n_avg"] = n_avg;
        report.rows.push_back(std::move(ml_row));
        StudyRow r1_row;
        r1_row.axis = tau;
        r1_row.label = "r1msde_time";
        r1_row.values["accuracy"] = r1_accuracy;
        r1_row.values["n_avg"] = n_avg;
        report.rows.push_back(std::move(r1_row));
    }
    report.manifest["ml_navg_90"] = ml_navg_90;
    report.manifest["r1msde_navg_90"] = r1_navg_90;
    return report;
}

// ---------------------------------------------------------------------------
// JSON dispatcher

GridConfig grid_from_json(const json& spec) {
    GridConfig grid;
    auto get = [&spec](const char* key, auto fallback) {
        return spec.contains(key) ? spec.at(key).get<decltype(fallback)>() : fallback;
    };
    grid.n_traces = get("n_traces", grid.n_traces);
    grid.snr_min_db = get("snr_min_db", grid.snr_min_db);
    grid.snr_max_db = get("snr_max_db", grid.snr_max_db);
    grid.snr_skew = get("snr_skew", grid.snr_skew);
    grid.reflectance_min_db = get("reflectance_min_db", grid.reflectance_min_db);
    grid.reflectance_max_db = get("reflectance_max_db", grid.reflectance_max_db);
    grid.laser_power_min_dbm = get("laser_power_min_dbm", grid.laser_power_min_dbm);
    grid.laser_power_max_dbm = get("laser_power_max_dbm", grid.laser_power_max_dbm);
    grid.attenuation_min_db = get("attenuation_min_db", grid.attenuation_min_db);
    grid.attenuation_max_db = get("attenuation_max_db", grid.attenuation_max_db);
    grid.max_events = get("max_events", grid.max_events);
    grid.window_len = get("window_len", grid.window_len);
    grid.seed = get("seed", grid.seed);
    grid.base.fiber_length_m = get("fiber_length_m", grid.base.fiber_length_m);
    grid.base.sampling_interval_m = get("sampling_interval_m", grid.base.sampling_interval_m);
    grid.base.pulse_width_samples = get("pulse_width_samples", grid.base.pulse_width_samples);
    grid.base.base_noise_sigma = get("base_noise_sigma", grid.base.base_noise_sigma);
    return grid;
}

TrainConfig train_config_from_json(const json& spec) {
    TrainConfig cfg;
    const json t = spec.contains("train") ? spec.at("train") : json::object();
    auto get = [&t](const char* key, auto fallback) {
        return t.contains(key) ? t.at(key).get<decltype(fallback)>() : fallback;
    };
    cfg.learning_rate = get("learning_rate", cfg.learning_rate);
    cfg.batch_size = get("batch_size", cfg.batch_size);
    cfg.max_epochs = get("max_epochs", cfg.max_epochs);
    cfg.patience = get("patience", cfg.patience);
    cfg.lr_decay = get("lr_decay", cfg.lr_decay);
    cfg.lr_decay_patience = get("lr_decay_patience", cfg.lr_decay_patience);
    cfg.min_learning_rate = get("min_learning_rate", cfg.min_learning_rate);
    cfg.seed = get("seed", cfg.seed);
    return cfg;
}

StudyReport run_study(const std::string& kind, const json& spec) {
    const std::array<double, 3> loss_weights =
        spec.contains("loss_weights") ? spec.at("loss_weights").get<std::array<double, 3>>()
                                      : std::array<double, 3>{0.5, 0.3, 0.2};
    const int n_seeds = spec.contains("n_seeds") ? spec.at("n_seeds").get<int>() : 5;

    if (kind == "snr_sweep") {
        const auto params = nn::load_model(spec.at("model").get<std::string>());
        const auto corpus = data::load_corpus(spec.at("corpus").get<std::string>());
        return run_snr_sweep(params, corpus);
    }
    if (kind == "single_vs_multi") {
        const auto corpus = spec.contains("corpus")
                                ? data::load_corpus(spec.at("corpus").get<std::string>())
                                : data::build_corpus(grid_from_json(spec), FeatureSet{});
        return run_single_vs_multi(corpus, train_config_from_json(spec), loss_weights, n_seeds);
    }
    if (kind == "feature_ablation") {
        const std::vector<std::string> sets =
            spec.contains("feature_sets")
                ? spec.at("feature_sets").get<std::vector<std::string>>()
                : std::vector<std::string>{"base", "laser_power+n_avg+attenuation", "snr",
                                           "snr+laser_power+n_avg+attenuation",
                                           "snr+laser_power+n_avg"};
        return run_feature_ablation(grid_from_json(spec), train_config_from_json(spec),
                                    loss_weights, n_seeds, sets);
    }
    if (kind == "sequence_length") {
        const std::vector<int> lengths =
            spec.contains("lengths") ? spec.at("lengths").get<std::vector<int>>()
                                     : std::vector<int>{35, 75, 100, 150, 200};
        return run_sequence_length(grid_from_json(spec), train_config_from_json(spec),
                                   loss_weights, lengths);
    }
    if (kind == "robustness") {
        const auto params = nn::load_model(spec.at("model").get<std::string>());
        return run_robustness(params, grid_from_json(spec));
    }
    throw std::invalid_argument("unknown study kind: " + kind);
}

}  // namespace otdr::eval
