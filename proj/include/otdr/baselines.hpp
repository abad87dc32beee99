#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace otdr::detect {

struct DetectorDecision {
    bool detected = false;
    int position_index = 0;  // meaningful iff detected
    double statistic = 0.0;
    double threshold = 0.0;
};

/// Classical two-point method: least-squares lines fitted independently to
/// fit_half_width samples on each side of every interior split; the
/// statistic is the largest up-step between the fitted values at the split,
/// normalized by the pooled residual std. A noiseless step yields an
/// infinite statistic.
DetectorDecision two_point_detect(std::span<const double> window, int fit_half_width,
                                  double threshold);

/// Rank-1 matched-subspace GLRT: the template at each candidate origin is a
/// mean-removed unit-norm rectangle of the known pulse width; the statistic
/// is the energy ratio <x,s>^2 / (|x|^2 - <x,s>^2) of the mean-removed
/// window, maximized over origins. Invariant under x -> c*x + b.
DetectorDecision r1msde_detect(std::span<const double> window, int pulse_width_samples,
                               double threshold);

/// Detection statistic alone (position ignored), for calibration.
using StatisticFn = std::function<double(std::span<const double>)>;
/// Produces one pure-noise window per draw index.
using NoiseWindowSource = std::function<std::vector<double>(std::uint64_t)>;

struct CalibrationFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Empirical (1 - target_pfa) quantile of the statistic over n_windows
/// noise windows. Deterministic given the source's seeding.
double calibrate_threshold(const StatisticFn& statistic, const NoiseWindowSource& source,
                           double target_pfa, int n_windows);

double two_point_statistic(std::span<const double> window, int fit_half_width);
double r1msde_statistic(std::span<const double> window, int pulse_width_samples);

}  // namespace otdr::detect
