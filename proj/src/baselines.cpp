#include "otdr/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace otdr::detect {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct LineFit {
    double intercept = 0.0;
    double slope = 0.0;
    double sse = 0.0;

    double at(double t) const { return intercept + slope * t; }
};

/// Least-squares line over samples[start, start+count) with abscissa t =
/// start..start+count-1.
LineFit fit_line(std::span<const double> samples, int start, int count) {
    double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
    for (int i = 0; i < count; ++i) {
        const double t = start + i;
        const double y = samples[static_cast<std::size_t>(start + i)];
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
    }
    LineFit fit;
    const double n = count;
    const double denom = n * stt - st * st;
    if (count >= 2 && denom > 0.0) {
        fit.slope = (n * sty - st * sy) / denom;
        fit.intercept = (sy - fit.slope * st) / n;
    } else {
        fit.intercept = sy / n;
    }
    for (int i = 0; i < count; ++i) {
        const double r = samples[static_cast<std::size_t>(start + i)] - fit.at(start + i);
        fit.sse += r * r;
    }
    return fit;
}

}  // namespace

double two_point_statistic(std::span<const double> window, int fit_half_width) {
    return two_point_detect(window, fit_half_width, kInf).statistic;
}

DetectorDecision two_point_detect(std::span<const double> window, int fit_half_width,
                                  double threshold) {
    const int len = static_cast<int>(window.size());
    const int w = fit_half_width;
    if (w < 2 || len < 2 * w + 1)
        throw std::invalid_argument("window too short for the two-point fit width");

    DetectorDecision decision;
    decision.threshold = threshold;
    decision.statistic = -kInf;
    for (int k = w; k + w <= len; ++k) {
        const LineFit left = fit_line(window, k - w, w);
        const LineFit right = fit_line(window, k, w);
        const double split = k - 0.5;
        const double jump = right.at(split) - left.at(split);
        const int dof = std::max(1, 2 * w - 4);
        const double pooled_std = std::sqrt((left.sse + right.sse) / dof);

        double stat;
        if (pooled_std > 0.0)
            stat = jump / pooled_std;
        else
            stat = jump > 0.0 ? kInf : 0.0;
        if (stat > decision.statistic) {
            decision.statistic = stat;
            decision.position_index = k;
        }
    }
    decision.detected = decision.statistic > threshold;
    return decision;
}

double r1msde_statistic(std::span<const double> window, int pulse_width_samples) {
    return r1msde_detect(window, pulse_width_samples, kInf).statistic;
}

DetectorDecision r1msde_detect(std::span<const double> window, int pulse_width_samples,
                               double threshold) {
    const int len = static_cast<int>(window.size());
    const int pw = pulse_width_samples;
    if (pw < 1 || len < pw)
        throw std::invalid_argument("window shorter than the pulse template");

    const double mean =
        std::accumulate(window.begin(), window.end(), 0.0) / static_cast<double>(len);
    double energy = 0.0;  // |x - mean|^2
    for (double x : window) energy += (x - mean) * (x - mean);

    DetectorDecision decision;
    decision.threshold = threshold;
    // Constant windows leave only rounding dust in the mean-removed energy.
    if (energy <= 1e-20 * static_cast<double>(len) * std::max(1.0, mean * mean)) {
        decision.detected = false;
        return decision;
    }

    // Template norm after removing its own mean: pw * (1 - pw/len).
    const double template_norm_sq = pw * (1.0 - static_cast<double>(pw) / len);

    double running = 0.0;  // sum of mean-removed samples over the candidate pulse
    for (int i = 0; i < pw; ++i) running += window[static_cast<std::size_t>(i)] - mean;

    decision.statistic = -kInf;
    for (int k = 0; k + pw <= len; ++k) {
        const double projection_sq = running * running / template_norm_sq;
        const double residual = energy - projection_sq;

        double stat;
        if (residual > 1e-12 * energy)
            stat = projection_sq / residual;
        else
            stat = projection_sq > 0.0 ? kInf : 0.0;
        if (stat > decision.statistic) {
            decision.statistic = stat;
            decision.position_index = k;
        }
        if (k + pw < len)
            running += (window[static_cast<std::size_t>(k + pw)] - mean) -
                       (window[static_cast<std::size_t>(k)] - mean);
    }
    decision.detected = decision.statistic > threshold;
    return decision;
}

double calibrate_threshold(const StatisticFn& statistic, const NoiseWindowSource& source,
                           double target_pfa, int n_windows) {
    if (!(target_pfa > 0.0) || !(target_pfa < 1.0))
        throw std::invalid_argument("target_pfa must lie in (0, 1)");
    if (n_windows < static_cast<int>(100.0 / target_pfa))
        throw std::invalid_argument("too few calibration windows for the target pfa");

    std::vector<double> stats(static_cast<std::size_t>(n_windows));
    for (int i = 0; i < n_windows; ++i)
        stats[static_cast<std::size_t>(i)] = statistic(source(static_cast<std::uint64_t>(i)));
    std::sort(stats.begin(), stats.end());
    if (stats.front() == stats.back())
        throw CalibrationFailure("degenerate statistic distribution during calibration");

    auto rank = static_cast<std::size_t>(
        std::floor((1.0 - target_pfa) * static_cast<double>(n_windows)));
    rank = std::min(rank, stats.size() - 1);
    return stats[rank];
}

}  // namespace otdr::detect
