#include "otdr/trace_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace otdr::sim {

using nlohmann::json;

int AcquisitionConfig::trace_length() const {
    return static_cast<int>(std::floor(fiber_length_m / sampling_interval_m));
}

double AcquisitionConfig::noise_sigma() const {
    return base_noise_sigma / std::sqrt(static_cast<double>(n_avg));
}

void AcquisitionConfig::validate() const {
    if (!(sampling_interval_m > 0.0))
        throw std::invalid_argument("sampling_interval_m must be > 0");
    if (pulse_width_samples < 1)
        throw std::invalid_argument("pulse_width_samples must be >= 1");
    if (n_avg < 1)
        throw std::invalid_argument("n_avg must be >= 1");
    if (!(base_noise_sigma >= 0.0) || !std::isfinite(base_noise_sigma))
        throw std::invalid_argument("base_noise_sigma must be finite and >= 0");
    if (fiber_length_m / sampling_interval_m < 2.0 * pulse_width_samples)
        throw std::invalid_argument("fiber too short for the configured pulse width");
    if (!std::isfinite(laser_power_dbm) || !std::isfinite(attenuation_db))
        throw std::invalid_argument("laser power / attenuation must be finite");
}

double reflectance_to_peak_height(double reflectance_db, const AcquisitionConfig& config) {
    if (!std::isfinite(reflectance_db))
        throw std::invalid_argument("reflectance_db must be finite");
    if (reflectance_db > 0.0)
        throw std::invalid_argument("reflectance_db must be <= 0");
    const double link_db = config.laser_power_dbm - config.attenuation_db;
    return config.reference_amplitude * std::pow(10.0, reflectance_db / 10.0) *
           std::pow(10.0, link_db / 10.0);
}

OtdrTrace synthesize_trace(const AcquisitionConfig& config,
                           const std::vector<std::pair<double, double>>& events) {
    config.validate();
    const int n = config.trace_length();
    const int pw = config.pulse_width_samples;

    OtdrTrace trace;
    trace.config = config;
    trace.samples.assign(static_cast<std::size_t>(n), 0.0);

    int prev_index = std::numeric_limits<int>::min();
    for (const auto& [position_m, reflectance_db] : events) {
        if (!(position_m > 0.0) || !(position_m < config.fiber_length_m))
            throw std::invalid_argument("event position outside (0, fiber_length_m)");
        const int index = static_cast<int>(std::llround(position_m / config.sampling_interval_m));
        if (index < prev_index + pw)
            throw std::invalid_argument("event pulses overlap or are out of order");
        if (index + pw > n)
            throw std::invalid_argument("event pulse extends past the trace end");
        prev_index = index;

        EventTruth truth;
        truth.position_index = index;
        truth.position_m = index * config.sampling_interval_m;
        truth.reflectance_db = reflectance_db;
        truth.peak_height = reflectance_to_peak_height(reflectance_db, config);
        for (int i = index; i < index + pw; ++i)
            trace.samples[static_cast<std::size_t>(i)] += truth.peak_height;
        trace.events.push_back(truth);
    }

    const double sigma = config.noise_sigma();
    if (sigma > 0.0) {
        std::mt19937_64 rng(config.seed);
        std::normal_distribution<double> noise(0.0, sigma);
        for (double& x : trace.samples) x += noise(rng);
    }

    for (const auto& truth : trace.events) {
        if (sigma > 0.0)
            trace.snr_db.push_back(10.0 * std::log10(truth.peak_height / sigma));
        else
            trace.snr_db.push_back(std::numeric_limits<double>::infinity());
    }
    return trace;
}

double estimate_noise_sigma(const OtdrTrace& trace, int n) {
    const int len = static_cast<int>(trace.samples.size());
    if (n < 1 || n > len)
        throw std::invalid_argument("estimation window must satisfy 1 <= n <= trace length");
    double sum = 0.0, sum_sq = 0.0;
    for (int i = len - n; i < len; ++i) {
        const double x = trace.samples[static_cast<std::size_t>(i)];
        sum += x;
        sum_sq += x * x;
    }
    const double mean = sum / n;
    const double mean_sq = sum_sq / n;
    const double variance = mean_sq - mean * mean;
    return variance > 0.0 ? std::sqrt(variance) : 0.0;
}

double estimate_peak_height(const OtdrTrace& trace, int position_index) {
    const int len = static_cast<int>(trace.samples.size());
    const int window_end = position_index + 2 * trace.config.pulse_width_samples;
    if (position_index < 0 || window_end >= len)
        throw std::invalid_argument("peak window exceeds trace bounds");
    double top1 = -std::numeric_limits<double>::infinity();
    double top2 = top1;
    for (int i = position_index; i <= window_end; ++i) {
        const double x = trace.samples[static_cast<std::size_t>(i)];
        if (x > top1) {
            top2 = top1;
            top1 = x;
        } else if (x > top2) {
            top2 = x;
        }
    }
    return 0.5 * (top1 + top2);
}

SnrEstimate compute_snr(const OtdrTrace& trace, int position_index, int n_noise) {
    const double a = estimate_peak_height(trace, position_index);
    const double sigma = estimate_noise_sigma(trace, n_noise);
    SnrEstimate result;
    if (sigma == 0.0) {
        result.ratio = std::numeric_limits<double>::infinity();
        result.snr_db = std::numeric_limits<double>::infinity();
        result.infinite = true;
        return result;
    }
    result.ratio = a / sigma;
    result.snr_db = 10.0 * std::log10(result.ratio);
    return result;
}

double averaging_time(double n_avg, double fiber_length_m, double refractive_index) {
    return 2.0 * n_avg * fiber_length_m * refractive_index / kSpeedOfLight;
}

namespace {

json config_to_json(const AcquisitionConfig& c) {
    return json{{"fiber_length_m", c.fiber_length_m},
                {"sampling_interval_m", c.sampling_interval_m},
                {"pulse_width_samples", c.pulse_width_samples},
                {"laser_power_dbm", c.laser_power_dbm},
                {"attenuation_db", c.attenuation_db},
                {"n_avg", c.n_avg},
                {"base_noise_sigma", c.base_noise_sigma},
                {"refractive_index", c.refractive_index},
                {"seed", c.seed},
                {"reference_amplitude", c.reference_amplitude}};
}

AcquisitionConfig config_from_json(const json& j) {
    AcquisitionConfig c;
    c.fiber_length_m = j.at("fiber_length_m").get<double>();
    c.sampling_interval_m = j.at("sampling_interval_m").get<double>();
    c.pulse_width_samples = j.at("pulse_width_samples").get<int>();
    c.laser_power_dbm = j.at("laser_power_dbm").get<double>();
    c.attenuation_db = j.at("attenuation_db").get<double>();
    c.n_avg = j.at("n_avg").get<std::int64_t>();
    c.base_noise_sigma = j.at("base_noise_sigma").get<double>();
    c.refractive_index = j.at("refractive_index").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.reference_amplitude = j.at("reference_amplitude").get<double>();
    return c;
}

}  // namespace

void save_trace(const OtdrTrace& trace, const std::string& path, bool binary) {
    json header;
    header["format"] = binary ? "bin" : "csv";
    header["n_samples"] = trace.samples.size();
    header["config"] = config_to_json(trace.config);
    header["events"] = json::array();
    for (std::size_t k = 0; k < trace.events.size(); ++k) {
        const auto& e = trace.events[k];
        header["events"].push_back({{"position_index", e.position_index},
                                    {"position_m", e.position_m},
                                    {"reflectance_db", e.reflectance_db},
                                    {"peak_height", e.peak_height},
                                    {"snr_db", trace.snr_db[k]}});
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open trace file for writing: " + path);
    out << header.dump() << '\n';
    if (binary) {
        static_assert(sizeof(double) == 8);
        out.write(reinterpret_cast<const char*>(trace.samples.data()),
                  static_cast<std::streamsize>(trace.samples.size() * sizeof(double)));
    } else {
        out.precision(17);
        for (double x : trace.samples) out << x << '\n';
    }
    if (!out) throw std::runtime_error("trace write failed: " + path);
}

OtdrTrace load_trace(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open trace file: " + path);
    std::string header_line;
    if (!std::getline(in, header_line))
        throw std::runtime_error("trace file has no header: " + path);
    json header = json::parse(header_line);

    OtdrTrace trace;
    trace.config = config_from_json(header.at("config"));
    for (const auto& e : header.at("events")) {
        EventTruth truth;
        truth.position_index = e.at("position_index").get<int>();
        truth.position_m = e.at("position_m").get<double>();
        truth.reflectance_db = e.at("reflectance_db").get<double>();
        truth.peak_height = e.at("peak_height").get<double>();
        trace.events.push_back(truth);
        trace.snr_db.push_back(e.at("snr_db").get<double>());
    }

    const auto n = header.at("n_samples").get<std::size_t>();
    trace.samples.resize(n);
    if (header.at("format").get<std::string>() == "bin") {
        in.read(reinterpret_cast<char*>(trace.samples.data()),
                static_cast<std::streamsize>(n * sizeof(double)));
        if (static_cast<std::size_t>(in.gcount()) != n * sizeof(double))
            throw std::runtime_error("trace sample block truncated: " + path);
    } else {
        for (std::size_t i = 0; i < n; ++i)
            if (!(in >> trace.samples[i]))
                throw std::runtime_error("trace CSV block truncated: " + path);
    }
    return trace;
}

}  // namespace otdr::sim
