#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "otdr/trace_sim.hpp"

namespace otdr::data {

inline constexpr int kDefaultWindowLen = 35;
inline constexpr double kReflectanceMinDb = -65.0;
inline constexpr double kReflectanceMaxDb = -10.0;

// Fixed affine scalings that bring each auxiliary setup feature into a
// unit-order range before it reaches the model.
inline constexpr double kAuxSnrScaleDb = 40.0;
inline constexpr double kAuxLaserScaleDbm = 12.0;
inline constexpr double kAuxAttenuationScaleDb = 20.0;
inline constexpr double kAuxLogNavgScale = 8.0;

/// Which setup parameters accompany the power sequence as model inputs.
struct FeatureSet {
    bool snr = false;          // gamma
    bool laser_power = false;  // P_laser
    bool n_avg = false;        // N_avg (log-scaled)
    bool attenuation = false;  // alpha_att

    int size() const {
        return (snr ? 1 : 0) + (laser_power ? 1 : 0) + (n_avg ? 1 : 0) + (attenuation ? 1 : 0);
    }
    std::string descriptor() const;
    static FeatureSet parse(const std::string& descriptor);

    bool operator==(const FeatureSet&) const = default;
};

struct WindowSample {
    std::vector<double> features;      // length window_len, min-max normalized
    std::vector<double> aux;           // per FeatureSet, scaled
    int id_class = 0;                  // 1: window intersects a pulse
    double position_target = 0.0;      // in [0,1]; meaningful iff id_class == 1
    double reflectance_target = 0.0;   // in [0,1]; meaningful iff id_class == 1
    std::int64_t window_origin = 0;    // sample index in the source trace
    double snr_db = 0.0;               // ground-truth gamma of the source trace
    int split = -1;                    // 0 train, 1 val, 2 test, -1 unassigned
};

struct Corpus {
    std::vector<WindowSample> samples;
    FeatureSet feature_set;
    int window_len = kDefaultWindowLen;

    std::size_t count_split(int split) const;
};

struct EncodedTargets {
    int id_class = 0;
    double position_target = 0.0;
    double reflectance_target = 0.0;
};

/// Per-window min-max normalization into [0,1]; a constant window maps to
/// all zeros.
std::vector<double> normalize_window(std::span<const double> raw);

EncodedTargets encode_targets(std::int64_t window_origin, const sim::EventTruth& truth,
                              int window_len, int pulse_width_samples,
                              std::pair<double, double> reflectance_range = {kReflectanceMinDb,
                                                                             kReflectanceMaxDb});

/// One window intersecting the first event's pulse and one event-free
/// window, offsets drawn uniformly over the valid origin ranges.
std::pair<WindowSample, WindowSample> extract_training_windows(const sim::OtdrTrace& trace,
                                                               int window_len, std::uint64_t seed,
                                                               const FeatureSet& feature_set);

/// Sliding-window segmentation at the given stride, plus a final
/// right-aligned window so every sample is covered.
std::vector<WindowSample> segment_trace(const sim::OtdrTrace& trace, int window_len, int stride);

/// Seeded permutation, then contiguous train/val/test assignment.
void split_corpus(Corpus& corpus, double f_train, double f_val, double f_test, std::uint64_t seed);

std::vector<double> aux_features(const sim::OtdrTrace& trace, double snr_db,
                                 const FeatureSet& feature_set);

/// Simulation grid for corpus construction. Per trace, the target SNR is
/// drawn uniformly from [snr_min_db, snr_max_db]; reflectance, laser power
/// and attenuation are drawn from their ranges and n_avg is solved so the
/// realized SNR hits the target.
struct GridConfig {
    int n_traces = 6300;
    double snr_min_db = 2.0;
    double snr_max_db = 30.0;
    // Exponent on the uniform draw for the SNR target: 1 spreads targets
    // evenly, values above 1 concentrate them toward snr_min_db where the
    // hard examples live.
    double snr_skew = 1.0;
    double reflectance_min_db = -60.0;
    double reflectance_max_db = -14.0;
    double laser_power_min_dbm = 0.0;
    double laser_power_max_dbm = 12.0;
    double attenuation_min_db = 0.0;
    double attenuation_max_db = 20.0;
    int max_events = 1;  // 2 builds the double-event robustness corpus
    sim::AcquisitionConfig base;  // fiber length, sampling, pulse width, base sigma
    int window_len = kDefaultWindowLen;
    std::uint64_t seed = 1;
};

/// Synthesizes n_traces traces, extracts one positive and one negative
/// window per trace, attaches aux features and performs the 60/20/20 split.
Corpus build_corpus(const GridConfig& grid, const FeatureSet& feature_set);

/// Draws acquisition parameters and event list for trace index i of the grid.
std::pair<sim::AcquisitionConfig, std::vector<std::pair<double, double>>> sample_grid_point(
    const GridConfig& grid, int trace_index);

double denormalize_position_m(double position_target, int window_len, double sampling_interval_m);
double denormalize_reflectance_db(double reflectance_target,
                                  std::pair<double, double> reflectance_range = {
                                      kReflectanceMinDb, kReflectanceMaxDb});

/// Corpus persistence: directory with manifest.json + samples.csv.
void save_corpus(const Corpus& corpus, const std::string& dir);
Corpus load_corpus(const std::string& dir);

}  // namespace otdr::data
