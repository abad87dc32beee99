#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <random>

#include "otdr/trace_sim.hpp"

using namespace otdr::sim;

namespace {

double sample_std(const std::vector<double>& v) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / static_cast<double>(v.size()));
}

AcquisitionConfig unity_config() {
    AcquisitionConfig c;
    c.laser_power_dbm = 0.0;
    c.attenuation_db = 0.0;
    c.reference_amplitude = 1.0;
    return c;
}

}  // namespace

TEST_CASE("peak height mapping") {
    const auto c = unity_config();
    CHECK(reflectance_to_peak_height(0.0, c) == doctest::Approx(1.0));
    CHECK(reflectance_to_peak_height(-10.0, c) == doctest::Approx(0.1));
    CHECK(reflectance_to_peak_height(-14.0, c) == doctest::Approx(0.0398).epsilon(1e-2));

    auto powered = c;
    powered.laser_power_dbm = 10.0;
    CHECK(reflectance_to_peak_height(-10.0, powered) == doctest::Approx(1.0));
    auto attenuated = c;
    attenuated.attenuation_db = 10.0;
    CHECK(reflectance_to_peak_height(-10.0, attenuated) == doctest::Approx(0.01));

    CHECK(reflectance_to_peak_height(-5.0, c) > reflectance_to_peak_height(-6.0, c));
    CHECK_THROWS_AS(reflectance_to_peak_height(std::nan(""), c), std::invalid_argument);
}

TEST_CASE("noiseless synthesis is an exact rectangle") {
    auto c = unity_config();
    c.base_noise_sigma = 0.0;
    const auto trace = synthesize_trace(c, {{800.0, -20.0}});
    REQUIRE(trace.events.size() == 1);
    const auto& ev = trace.events[0];
    const double a = reflectance_to_peak_height(-20.0, c);
    CHECK(ev.position_index == 1000);
    CHECK(ev.peak_height == doctest::Approx(a));
    for (int i = 0; i < c.trace_length(); ++i) {
        const bool inside = i >= ev.position_index && i < ev.position_index + c.pulse_width_samples;
        CHECK(trace.samples[static_cast<std::size_t>(i)] == doctest::Approx(inside ? a : 0.0));
    }
}

TEST_CASE("synthesis determinism and validation") {
    auto c = unity_config();
    c.seed = 77;
    const auto t1 = synthesize_trace(c, {{500.0, -30.0}});
    const auto t2 = synthesize_trace(c, {{500.0, -30.0}});
    CHECK(t1.samples == t2.samples);

    CHECK_THROWS_AS(synthesize_trace(c, {{-1.0, -30.0}}), std::invalid_argument);
    CHECK_THROWS_AS(synthesize_trace(c, {{3000.0, -30.0}}), std::invalid_argument);
    // 2 m apart = 2.5 samples, inside one pulse width
    CHECK_THROWS_AS(synthesize_trace(c, {{500.0, -30.0}, {502.0, -30.0}}), std::invalid_argument);
}

TEST_CASE("two events 9 m apart form disjoint rectangles") {
    auto c = unity_config();
    c.base_noise_sigma = 0.0;
    const auto trace = synthesize_trace(c, {{800.0, -20.0}, {809.0, -20.0}});
    REQUIRE(trace.events.size() == 2);
    const int gap_start = trace.events[0].position_index + c.pulse_width_samples;
    const int gap_end = trace.events[1].position_index;
    CHECK(gap_end > gap_start);
    for (int i = gap_start; i < gap_end; ++i)
        CHECK(trace.samples[static_cast<std::size_t>(i)] == doctest::Approx(0.0));
    CHECK(trace.samples[static_cast<std::size_t>(trace.events[1].position_index)] ==
          doctest::Approx(trace.events[1].peak_height));
}

TEST_CASE("averaging law: 4x n_avg halves the noise std") {
    auto c = unity_config();
    std::vector<double> stds_1, stds_4;
    for (int r = 0; r < 100; ++r) {
        c.seed = static_cast<std::uint64_t>(r);
        c.n_avg = 1;
        stds_1.push_back(sample_std(synthesize_trace(c, {}).samples));
        c.seed = static_cast<std::uint64_t>(r) + 1000;
        c.n_avg = 4;
        stds_4.push_back(sample_std(synthesize_trace(c, {}).samples));
    }
    const double mean_1 = std::accumulate(stds_1.begin(), stds_1.end(), 0.0) / 100.0;
    const double mean_4 = std::accumulate(stds_4.begin(), stds_4.end(), 0.0) / 100.0;
    CHECK(mean_4 == doctest::Approx(mean_1 / 2.0).epsilon(0.10));
}

TEST_CASE("noise sigma estimator") {
    auto c = unity_config();
    c.base_noise_sigma = 0.0;
    OtdrTrace trace;
    trace.config = c;

    SUBCASE("constant tail") {
        trace.samples.assign(2000, 3.0);
        CHECK(estimate_noise_sigma(trace, 1000) == doctest::Approx(0.0));
    }
    SUBCASE("alternating tail") {
        trace.samples.assign(2000, 0.0);
        for (std::size_t i = 1000; i < 2000; ++i) trace.samples[i] = (i % 2 == 0) ? 1.0 : -1.0;
        CHECK(estimate_noise_sigma(trace, 1000) == doctest::Approx(1.0));
    }
    SUBCASE("standard normal tail vs two-pass oracle") {
        std::mt19937_64 rng(5);
        std::normal_distribution<double> normal;
        trace.samples.resize(2000);
        for (auto& x : trace.samples) x = normal(rng);
        const double est = estimate_noise_sigma(trace, 1000);
        CHECK(est == doctest::Approx(1.0).epsilon(0.05));

        std::vector<double> tail(trace.samples.end() - 1000, trace.samples.end());
        CHECK(est == doctest::Approx(sample_std(tail)).epsilon(1e-12));
    }
    SUBCASE("n larger than the trace") {
        trace.samples.assign(100, 0.0);
        CHECK_THROWS_AS(estimate_noise_sigma(trace, 1000), std::invalid_argument);
    }
}

TEST_CASE("peak height estimator") {
    OtdrTrace trace;
    trace.config = unity_config();
    trace.samples.assign(100, 0.0);

    SUBCASE("top two of the window") {
        const double vals[] = {1, 2, 5, 7, 3};
        for (int i = 0; i < 5; ++i) trace.samples[static_cast<std::size_t>(10 + i)] = vals[i];
        CHECK(estimate_peak_height(trace, 10) == doctest::Approx(6.0));
    }
    SUBCASE("constant window") {
        std::fill(trace.samples.begin(), trace.samples.end(), 4.2);
        CHECK(estimate_peak_height(trace, 10) == doctest::Approx(4.2));
    }
    SUBCASE("window past the end") {
        CHECK_THROWS_AS(estimate_peak_height(trace, 95), std::invalid_argument);
    }
}

TEST_CASE("noiseless round trip through the peak estimator") {
    auto c = unity_config();
    c.base_noise_sigma = 0.0;
    for (double r : {-14.0, -25.0, -40.0, -55.0}) {
        const auto trace = synthesize_trace(c, {{1000.0, r}});
        const double a = reflectance_to_peak_height(r, c);
        CHECK(estimate_peak_height(trace, trace.events[0].position_index) ==
              doctest::Approx(a).epsilon(1e-9));
    }
}

TEST_CASE("snr estimator") {
    OtdrTrace trace;
    trace.config = unity_config();
    trace.samples.assign(2000, 0.0);
    for (std::size_t i = 1000; i < 2000; ++i) trace.samples[i] = (i % 2 == 0) ? 1.0 : -1.0;

    SUBCASE("one decade") {
        trace.samples[100] = 10.0;
        trace.samples[101] = 10.0;
        const auto snr = compute_snr(trace, 100);
        CHECK_FALSE(snr.infinite);
        CHECK(snr.ratio == doctest::Approx(10.0));
        CHECK(snr.snr_db == doctest::Approx(10.0));
    }
    SUBCASE("unit ratio") {
        trace.samples[100] = 1.0;
        trace.samples[101] = 1.0;
        const auto snr = compute_snr(trace, 100);
        CHECK(snr.ratio == doctest::Approx(1.0));
        CHECK(snr.snr_db == doctest::Approx(0.0));
    }
    SUBCASE("zero noise flags infinity") {
        std::fill(trace.samples.begin() + 1000, trace.samples.end(), 0.0);
        trace.samples[100] = 5.0;
        trace.samples[101] = 5.0;
        CHECK(compute_snr(trace, 100).infinite);
    }
}

TEST_CASE("snr of a synthesized 15 dB trace") {
    auto c = unity_config();
    c.seed = 11;
    // a = 10^(-2.5) = 31.6 * base sigma
    c.base_noise_sigma = 1e-4;
    const auto trace = synthesize_trace(c, {{800.0, -25.0}});
    const auto snr = compute_snr(trace, trace.events[0].position_index);
    CHECK(snr.snr_db == doctest::Approx(15.0).epsilon(0.04));
    CHECK(trace.snr_db[0] == doctest::Approx(15.0).epsilon(0.01));
}

TEST_CASE("averaging time") {
    CHECK(averaging_time(0, 1e4, 1.5) == doctest::Approx(0.0));
    CHECK(averaging_time(1, 1e4, 1.5) == doctest::Approx(1.0004e-4).epsilon(1e-3));
    CHECK(averaging_time(62, 8785, 1.468) == doctest::Approx(5.33e-3).epsilon(1e-3));
    CHECK(averaging_time(128, 5000, 1.47) == doctest::Approx(2 * averaging_time(64, 5000, 1.47)));
    CHECK(averaging_time(64, 10000, 1.47) == doctest::Approx(2 * averaging_time(64, 5000, 1.47)));
}

TEST_CASE("trace persistence round trip") {
    auto c = unity_config();
    c.seed = 31;
    const auto trace = synthesize_trace(c, {{500.0, -20.0}, {900.0, -35.0}});
    const auto dir = std::filesystem::temp_directory_path() / "otdr_trace_io_test";
    std::filesystem::create_directories(dir);

    for (bool binary : {false, true}) {
        const auto path = dir / (binary ? "t.otdr" : "t.csv");
        save_trace(trace, path.string(), binary);
        const auto loaded = load_trace(path.string());
        REQUIRE(loaded.samples.size() == trace.samples.size());
        CHECK(loaded.samples == trace.samples);
        REQUIRE(loaded.events.size() == 2);
        CHECK(loaded.events[1].position_index == trace.events[1].position_index);
        CHECK(loaded.events[1].reflectance_db == doctest::Approx(-35.0));
        CHECK(loaded.config.pulse_width_samples == c.pulse_width_samples);
        CHECK(loaded.config.sampling_interval_m == doctest::Approx(c.sampling_interval_m));
    }
    std::filesystem::remove_all(dir);
}
