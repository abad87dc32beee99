#include "otdr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace otdr::data {

using nlohmann::json;

std::string FeatureSet::descriptor() const {
    if (size() == 0) return "base";
    std::string out;
    auto add = [&out](const char* name) {
        if (!out.empty()) out += '+';
        out += name;
    };
    if (snr) add("snr");
    if (laser_power) add("laser_power");
    if (n_avg) add("n_avg");
    if (attenuation) add("attenuation");
    return out;
}

FeatureSet FeatureSet::parse(const std::string& descriptor) {
    FeatureSet fs;
    if (descriptor.empty() || descriptor == "base") return fs;
    std::stringstream ss(descriptor);
    std::string token;
    while (std::getline(ss, token, '+')) {
        if (token == "snr")
            fs.snr = true;
        else if (token == "laser_power")
            fs.laser_power = true;
        else if (token == "n_avg")
            fs.n_avg = true;
        else if (token == "attenuation")
            fs.attenuation = true;
        else
            throw std::invalid_argument("unknown aux feature: " + token);
    }
    return fs;
}

std::size_t Corpus::count_split(int split) const {
    return static_cast<std::size_t>(
        std::count_if(samples.begin(), samples.end(),
                      [split](const WindowSample& s) { return s.split == split; }));
}

std::vector<double> normalize_window(std::span<const double> raw) {
    if (raw.empty()) throw std::invalid_argument("cannot normalize an empty window");
    double lo = raw[0], hi = raw[0];
    for (double x : raw) {
        if (!std::isfinite(x)) throw std::invalid_argument("non-finite sample in window");
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    std::vector<double> out(raw.size(), 0.0);
    if (hi > lo) {
        const double inv = 1.0 / (hi - lo);
        for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - lo) * inv;
    }
    return out;
}

namespace {

bool window_hits_pulse(std::int64_t origin, int window_len, int pulse_start, int pulse_width) {
    return origin <= pulse_start + pulse_width - 1 &&
           origin + window_len - 1 >= pulse_start;
}

}  // namespace

EncodedTargets encode_targets(std::int64_t window_origin, const sim::EventTruth& truth,
                              int window_len, int pulse_width_samples,
                              std::pair<double, double> reflectance_range) {
    const auto [r_min, r_max] = reflectance_range;
    if (!(r_min < r_max)) throw std::invalid_argument("reflectance range must have min < max");

    EncodedTargets t;
    t.id_class = window_hits_pulse(window_origin, window_len, truth.position_index,
                                   pulse_width_samples)
                     ? 1
                     : 0;
    const double rel = std::clamp<double>(
        static_cast<double>(truth.position_index - window_origin), 0.0,
        static_cast<double>(window_len - 1));
    t.position_target = rel / (window_len - 1);
    t.reflectance_target =
        std::clamp((truth.reflectance_db - r_min) / (r_max - r_min), 0.0, 1.0);
    return t;
}

std::vector<double> aux_features(const sim::OtdrTrace& trace, double snr_db,
                                 const FeatureSet& feature_set) {
    std::vector<double> aux;
    if (feature_set.snr) aux.push_back(snr_db / kAuxSnrScaleDb);
    if (feature_set.laser_power)
        aux.push_back(trace.config.laser_power_dbm / kAuxLaserScaleDbm);
    if (feature_set.n_avg)
        aux.push_back(std::log10(static_cast<double>(trace.config.n_avg)) / kAuxLogNavgScale);
    if (feature_set.attenuation)
        aux.push_back(trace.config.attenuation_db / kAuxAttenuationScaleDb);
    return aux;
}

std::pair<WindowSample, WindowSample> extract_training_windows(const sim::OtdrTrace& trace,
                                                               int window_len, std::uint64_t seed,
                                                               const FeatureSet& feature_set) {
    const auto n = static_cast<std::int64_t>(trace.samples.size());
    if (trace.events.empty()) throw std::invalid_argument("trace has no event to extract");
    if (n < 2 * window_len) throw std::invalid_argument("trace too short for extraction");
    const int pw = trace.config.pulse_width_samples;

    std::mt19937_64 rng(seed);

    // Positive window: any origin whose span intersects the first pulse.
    const int p = trace.events.front().position_index;
    const std::int64_t ev_lo = std::max<std::int64_t>(0, p - window_len + 1);
    const std::int64_t ev_hi = std::min<std::int64_t>(n - window_len, p + pw - 1);
    std::uniform_int_distribution<std::int64_t> ev_dist(ev_lo, ev_hi);
    const std::int64_t ev_origin = ev_dist(rng);

    // Negative window: uniform over origins clear of every pulse.
    std::vector<std::pair<std::int64_t, std::int64_t>> free_ranges;
    std::int64_t cursor = 0;
    for (const auto& e : trace.events) {
        const std::int64_t blocked_lo = std::max<std::int64_t>(0, e.position_index - window_len + 1);
        const std::int64_t blocked_hi = e.position_index + pw - 1;
        if (blocked_lo > cursor) free_ranges.emplace_back(cursor, blocked_lo - 1);
        cursor = std::max(cursor, blocked_hi + 1);
    }
    if (cursor <= n - window_len) free_ranges.emplace_back(cursor, n - window_len);
    std::int64_t n_free = 0;
    for (const auto& [lo, hi] : free_ranges) n_free += hi - lo + 1;
    if (n_free <= 0) throw std::runtime_error("no event-free window exists in trace");
    std::uniform_int_distribution<std::int64_t> noise_dist(0, n_free - 1);
    std::int64_t pick = noise_dist(rng);
    std::int64_t noise_origin = 0;
    for (const auto& [lo, hi] : free_ranges) {
        const std::int64_t span = hi - lo + 1;
        if (pick < span) {
            noise_origin = lo + pick;
            break;
        }
        pick -= span;
    }

    const double trace_snr = trace.snr_db.empty() ? 0.0 : trace.snr_db.front();
    auto make = [&](std::int64_t origin, bool positive) {
        WindowSample s;
        s.window_origin = origin;
        s.features = normalize_window(
            std::span<const double>(trace.samples).subspan(static_cast<std::size_t>(origin),
                                                           static_cast<std::size_t>(window_len)));
        s.aux = aux_features(trace, trace_snr, feature_set);
        s.snr_db = trace_snr;
        if (positive) {
            // Encode against the intersecting event; with several candidates
            // take the one with the largest in-window overlap.
            const sim::EventTruth* best = nullptr;
            std::int64_t best_overlap = -1;
            for (const auto& e : trace.events) {
                if (!window_hits_pulse(origin, window_len, e.position_index, pw)) continue;
                const std::int64_t overlap =
                    std::min<std::int64_t>(origin + window_len, e.position_index + pw) -
                    std::max<std::int64_t>(origin, e.position_index);
                if (overlap > best_overlap) {
                    best_overlap = overlap;
                    best = &e;
                }
            }
            const auto t = encode_targets(origin, *best, window_len, pw);
            s.id_class = 1;
            s.position_target = t.position_target;
            s.reflectance_target = t.reflectance_target;
        }
        return s;
    };
    return {make(ev_origin, true), make(noise_origin, false)};
}

std::vector<WindowSample> segment_trace(const sim::OtdrTrace& trace, int window_len, int stride) {
    const auto n = static_cast<std::int64_t>(trace.samples.size());
    if (window_len > n) throw std::invalid_argument("window_len exceeds trace length");
    if (stride < 1) throw std::invalid_argument("stride must be >= 1");

    std::vector<WindowSample> windows;
    std::int64_t last_emitted = -1;
    for (std::int64_t origin = 0; origin + window_len <= n; origin += stride) {
        WindowSample s;
        s.window_origin = origin;
        s.features = normalize_window(
            std::span<const double>(trace.samples).subspan(static_cast<std::size_t>(origin),
                                                           static_cast<std::size_t>(window_len)));
        windows.push_back(std::move(s));
        last_emitted = origin;
    }
    const std::int64_t final_origin = n - window_len;
    if (final_origin != last_emitted) {
        WindowSample s;
        s.window_origin = final_origin;
        s.features = normalize_window(std::span<const double>(trace.samples)
                                          .subspan(static_cast<std::size_t>(final_origin),
                                                   static_cast<std::size_t>(window_len)));
        windows.push_back(std::move(s));
    }
    return windows;
}

void split_corpus(Corpus& corpus, double f_train, double f_val, double f_test,
                  std::uint64_t seed) {
    for (double f : {f_train, f_val, f_test})
        if (f < 0.0 || f > 1.0) throw std::invalid_argument("split fraction outside [0,1]");
    if (std::abs(f_train + f_val + f_test - 1.0) > 1e-9)
        throw std::invalid_argument("split fractions must sum to 1");

    const std::size_t n = corpus.samples.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    const auto n_train = static_cast<std::size_t>(std::llround(f_train * n));
    const auto n_val = static_cast<std::size_t>(std::llround(f_val * n));
    for (std::size_t i = 0; i < n; ++i) {
        int split = 2;
        if (i < n_train)
            split = 0;
        else if (i < n_train + n_val)
            split = 1;
        corpus.samples[order[i]].split = split;
    }
}

namespace {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

std::pair<sim::AcquisitionConfig, std::vector<std::pair<double, double>>> sample_grid_point(
    const GridConfig& grid, int trace_index) {
    std::mt19937_64 rng(mix64(grid.seed) ^ mix64(static_cast<std::uint64_t>(trace_index)));
    std::uniform_real_distribution<double> laser_dist(grid.laser_power_min_dbm,
                                                      grid.laser_power_max_dbm);
    std::uniform_real_distribution<double> att_dist(grid.attenuation_min_db,
                                                    grid.attenuation_max_db);

    sim::AcquisitionConfig config = grid.base;
    config.seed = grid.seed ^ static_cast<std::uint64_t>(trace_index);
    config.laser_power_dbm = laser_dist(rng);
    config.attenuation_db = att_dist(rng);
    config.n_avg = 1;

    // SNR targets lean toward the low end of the range, where the hard
    // examples live: a skew above 1 gives the bottom decibels a higher
    // density than the top end (uniform when snr_skew is 1).
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double target_snr_db =
        grid.snr_min_db +
        (grid.snr_max_db - grid.snr_min_db) * std::pow(unit(rng), grid.snr_skew);
    // Reflectance tracks the SNR target with a few dB of spread, as on a
    // bench where the strong reflectors are what yields the high-SNR traces.
    // Window normalization erases absolute amplitude, so without this
    // coupling the reflectance target would be unlearnable from the samples.
    auto coupled_reflectance = [&](double snr_db) {
        const double span = std::max(1e-9, grid.snr_max_db - grid.snr_min_db);
        const double t = (snr_db - grid.snr_min_db) / span;
        const double nominal = grid.reflectance_min_db +
                               t * (grid.reflectance_max_db - grid.reflectance_min_db);
        std::uniform_real_distribution<double> jitter(-2.5, 2.5);
        return std::clamp(nominal + jitter(rng), grid.reflectance_min_db,
                          grid.reflectance_max_db);
    };
    const double reflectance_db = coupled_reflectance(target_snr_db);

    // Solve n_avg so the realized SNR hits the target; when the rounded
    // n_avg saturates at 1 (or the cap) the attenuation absorbs the rest.
    double a = sim::reflectance_to_peak_height(reflectance_db, config);
    const double sigma_needed = a / std::pow(10.0, target_snr_db / 10.0);
    const double n_exact = (config.base_noise_sigma / sigma_needed) *
                           (config.base_noise_sigma / sigma_needed);
    constexpr std::int64_t kNavgCap = 100000000;
    const auto n_rounded =
        std::clamp<std::int64_t>(static_cast<std::int64_t>(std::llround(n_exact)), 1, kNavgCap);
    // The attenuation absorbs the rounding/clamping of n_avg so the realized
    // SNR still hits the target: 5*log10(rounded/exact) dB.
    config.attenuation_db += 5.0 * std::log10(static_cast<double>(n_rounded) / n_exact);
    config.n_avg = n_rounded;

    // Event positions: clear of the trace edges and of the noise-estimation
    // tail, pairwise separated so pulses stay disjoint.
    const int n = config.trace_length();
    const int pw = config.pulse_width_samples;
    const int margin = 2 * pw;
    const int tail = std::min(1000, n / 4);
    const int lo = margin;
    const int hi = n - tail - margin;

    const int n_events = grid.max_events;
    std::vector<std::pair<double, double>> events;
    if (n_events == 1) {
        std::uniform_int_distribution<int> pos_dist(lo, hi);
        events.emplace_back(pos_dist(rng) * config.sampling_interval_m, reflectance_db);
    } else {
        // Double-event layout per the multi-reflector bench: fixed patch-cord
        // gaps, second reflectance drawn independently.
        static constexpr double kGapsM[] = {9.0, 12.0, 15.0, 18.0};
        std::uniform_int_distribution<int> gap_pick(0, 3);
        const int gap = static_cast<int>(std::llround(kGapsM[gap_pick(rng)] /
                                                      config.sampling_interval_m));
        std::uniform_int_distribution<int> pos_dist(lo, hi - gap);
        const int first = pos_dist(rng);
        events.emplace_back(first * config.sampling_interval_m, reflectance_db);
        events.emplace_back((first + gap) * config.sampling_interval_m,
                            coupled_reflectance(target_snr_db));
    }
    return {config, events};
}

Corpus build_corpus(const GridConfig& grid, const FeatureSet& feature_set) {
    Corpus corpus;
    corpus.feature_set = feature_set;
    corpus.window_len = grid.window_len;
    corpus.samples.reserve(static_cast<std::size_t>(grid.n_traces) * 2);

    for (int i = 0; i < grid.n_traces; ++i) {
        auto [config, events] = sample_grid_point(grid, i);
        const auto trace = sim::synthesize_trace(config, events);
        auto [positive, negative] = extract_training_windows(
            trace, grid.window_len, mix64(grid.seed ^ 0x5bf03635ULL) ^ mix64(i), feature_set);
        corpus.samples.push_back(std::move(positive));
        corpus.samples.push_back(std::move(negative));
    }
    split_corpus(corpus, 0.6, 0.2, 0.2, mix64(grid.seed ^ 0x517cc1b7ULL));
    return corpus;
}

double denormalize_position_m(double position_target, int window_len,
                              double sampling_interval_m) {
    return position_target * (window_len - 1) * sampling_interval_m;
}

double denormalize_reflectance_db(double reflectance_target,
                                  std::pair<double, double> reflectance_range) {
    const auto [r_min, r_max] = reflectance_range;
    return r_min + reflectance_target * (r_max - r_min);
}

void save_corpus(const Corpus& corpus, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    json manifest;
    manifest["feature_set"] = corpus.feature_set.descriptor();
    manifest["window_len"] = corpus.window_len;
    manifest["n_samples"] = corpus.samples.size();
    manifest["n_train"] = corpus.count_split(0);
    manifest["n_val"] = corpus.count_split(1);
    manifest["n_test"] = corpus.count_split(2);
    std::ofstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw std::runtime_error("cannot write corpus manifest in " + dir);
    mf << manifest.dump(2) << '\n';

    std::ofstream cf(fs::path(dir) / "samples.csv");
    if (!cf) throw std::runtime_error("cannot write corpus samples in " + dir);
    cf.precision(17);
    for (int i = 0; i < corpus.window_len; ++i) cf << 'f' << i << ',';
    for (int i = 0; i < corpus.feature_set.size(); ++i) cf << "aux" << i << ',';
    cf << "id_class,position_target,reflectance_target,snr_db,window_origin,split\n";
    for (const auto& s : corpus.samples) {
        for (double x : s.features) cf << x << ',';
        for (double x : s.aux) cf << x << ',';
        cf << s.id_class << ',' << s.position_target << ',' << s.reflectance_target << ','
           << s.snr_db << ',' << s.window_origin << ',' << s.split << '\n';
    }
}

Corpus load_corpus(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw std::runtime_error("cannot read corpus manifest in " + dir);
    json manifest = json::parse(mf);

    Corpus corpus;
    corpus.feature_set = FeatureSet::parse(manifest.at("feature_set").get<std::string>());
    corpus.window_len = manifest.at("window_len").get<int>();
    const int n_aux = corpus.feature_set.size();

    std::ifstream cf(fs::path(dir) / "samples.csv");
    if (!cf) throw std::runtime_error("cannot read corpus samples in " + dir);
    std::string line;
    std::getline(cf, line);  // header
    while (std::getline(cf, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        auto next = [&]() -> double {
            if (!std::getline(ss, cell, ',')) throw std::runtime_error("corpus row truncated");
            return std::stod(cell);
        };
        WindowSample s;
        s.features.resize(static_cast<std::size_t>(corpus.window_len));
        for (auto& x : s.features) x = next();
        s.aux.resize(static_cast<std::size_t>(n_aux));
        for (auto& x : s.aux) x = next();
        s.id_class = static_cast<int>(next());
        s.position_target = next();
        s.reflectance_target = next();
        s.snr_db = next();
        s.window_origin = static_cast<std::int64_t>(next());
        s.split = static_cast<int>(next());
        corpus.samples.push_back(std::move(s));
    }
    const auto expected = manifest.at("n_samples").get<std::size_t>();
    if (corpus.samples.size() != expected)
        throw std::runtime_error("corpus sample count does not match manifest");
    return corpus;
}

}  // namespace otdr::data
