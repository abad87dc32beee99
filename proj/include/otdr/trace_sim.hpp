#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace otdr::sim {

inline constexpr double kSpeedOfLight = 2.9979e8;  // m/s

/// Acquisition settings for one synthesized trace. Amplitudes are linear;
/// the noise std of the averaged trace is base_noise_sigma / sqrt(n_avg).
struct AcquisitionConfig {
    double fiber_length_m = 2000.0;
    double sampling_interval_m = 0.8;
    int pulse_width_samples = 6;       // 50 ns pulse at 8 ns sampling
    double laser_power_dbm = 0.0;
    double attenuation_db = 0.0;
    std::int64_t n_avg = 1;
    double base_noise_sigma = 1e-4;
    double refractive_index = 1.468;
    std::uint64_t seed = 0;

    // Calibration constant mapping 0 dB reflectance at unity link budget
    // to unit peak amplitude. Window normalization downstream makes the
    // absolute scale irrelevant.
    double reference_amplitude = 1.0;

    int trace_length() const;
    double noise_sigma() const;

    /// Throws std::invalid_argument on any violated constraint.
    void validate() const;
};

struct EventTruth {
    int position_index = 0;
    double position_m = 0.0;
    double reflectance_db = 0.0;  // <= 0
    double peak_height = 0.0;     // linear amplitude
};

struct OtdrTrace {
    std::vector<double> samples;
    AcquisitionConfig config;
    std::vector<EventTruth> events;
    std::vector<double> snr_db;  // per event, from ground truth
};

/// Peak amplitude of a reflective event:
///   a = A_ref * 10^(R/10) * 10^((P_laser - att)/10)
double reflectance_to_peak_height(double reflectance_db, const AcquisitionConfig& config);

/// Flat near-zero baseline + one rectangle per event + i.i.d. Gaussian noise.
/// Events are (position_m, reflectance_db) pairs, sorted by position and
/// separated by at least 2 * pulse_width_samples samples.
OtdrTrace synthesize_trace(const AcquisitionConfig& config,
                           const std::vector<std::pair<double, double>>& events);

/// Population std over the final n samples of the trace.
double estimate_noise_sigma(const OtdrTrace& trace, int n = 1000);

/// Mean of the two largest samples in
/// [position_index, position_index + 2 * pulse_width].
double estimate_peak_height(const OtdrTrace& trace, int position_index);

struct SnrEstimate {
    double ratio = 0.0;
    double snr_db = 0.0;
    bool infinite = false;  // sigma estimate was zero
};

/// SNR of the event at position_index: peak height over noise std,
/// snr_db = 10 * log10(ratio).
SnrEstimate compute_snr(const OtdrTrace& trace, int position_index, int n_noise = 1000);

/// Acquisition time of n_avg averaged records over a fiber of the given
/// length: tau = 2 * n_avg * L * n / c.
double averaging_time(double n_avg, double fiber_length_m, double refractive_index);

/// Trace persistence: JSON header line (config + event truths) followed by
/// the sample block, either CSV rows or raw little-endian f64.
void save_trace(const OtdrTrace& trace, const std::string& path, bool binary = false);
OtdrTrace load_trace(const std::string& path);

}  // namespace otdr::sim
