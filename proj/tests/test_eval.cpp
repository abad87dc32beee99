#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "otdr/eval.hpp"

using namespace otdr;
using namespace otdr::eval;

TEST_CASE("classification metrics") {
    SUBCASE("all correct") {
        const ConfusionCounts counts{50, 50, 0, 0};
        const auto m = classification_metrics(counts);
        CHECK(*m.accuracy == doctest::Approx(1.0));
        CHECK(*m.f1 == doctest::Approx(1.0));
    }
    SUBCASE("mixed counts") {
        const ConfusionCounts counts{45, 48, 2, 5};
        const auto m = classification_metrics(counts);
        CHECK(*m.accuracy == doctest::Approx(0.93));
        CHECK(*m.precision == doctest::Approx(0.957).epsilon(1e-3));
        CHECK(*m.recall == doctest::Approx(0.90));
        CHECK(*m.f1 == doctest::Approx(2 * 0.95745 * 0.9 / (0.95745 + 0.9)).epsilon(1e-4));
    }
    SUBCASE("undefined fields stay empty") {
        const ConfusionCounts no_predicted_positives{0, 10, 0, 5};
        const auto m = classification_metrics(no_predicted_positives);
        CHECK_FALSE(m.precision.has_value());
        CHECK(m.recall.has_value());

        const ConfusionCounts empty{0, 0, 0, 0};
        CHECK_THROWS_AS(classification_metrics(empty), std::invalid_argument);
    }
    SUBCASE("confusion accumulation") {
        ConfusionCounts counts;
        counts.add(true, true);
        counts.add(true, false);
        counts.add(false, true);
        counts.add(false, false);
        CHECK(counts.n_tp == 1);
        CHECK(counts.n_fn == 1);
        CHECK(counts.n_fp == 1);
        CHECK(counts.n_tn == 1);
    }
}

TEST_CASE("wilson interval") {
    SUBCASE("z = 0 collapses to the point estimate") {
        const auto [lo, hi] = wilson_interval(30, 100, 0.0);
        CHECK(lo == doctest::Approx(0.3));
        CHECK(hi == doctest::Approx(0.3));
    }
    SUBCASE("perfect score touches 1") {
        const auto [lo, hi] = wilson_interval(50, 50);
        CHECK(hi == doctest::Approx(1.0));
        CHECK(lo < 1.0);
    }
    SUBCASE("reference value at 93/100") {
        const auto [lo, hi] = wilson_interval(93, 100);
        CHECK(lo == doctest::Approx(0.864).epsilon(2e-3));
        CHECK(hi == doctest::Approx(0.965).epsilon(2e-3));
    }
    SUBCASE("contains the point estimate and narrows with n") {
        const auto [lo1, hi1] = wilson_interval(93, 100);
        CHECK(lo1 < 0.93);
        CHECK(hi1 > 0.93);
        const auto [lo2, hi2] = wilson_interval(930, 1000);
        CHECK(hi2 - lo2 < hi1 - lo1);
    }
}

TEST_CASE("regression metrics") {
    SUBCASE("exact predictions") {
        const std::vector<double> v = {1.0, 2.0, 3.0};
        const auto [rmse, mae] = regression_metrics(v, v);
        CHECK(rmse == doctest::Approx(0.0));
        CHECK(mae == doctest::Approx(0.0));
    }
    SUBCASE("symmetric errors") {
        const std::vector<double> pred = {3.0, -3.0};
        const std::vector<double> truth = {0.0, 0.0};
        const auto [rmse, mae] = regression_metrics(pred, truth);
        CHECK(rmse == doctest::Approx(3.0));
        CHECK(mae == doctest::Approx(3.0));
    }
    SUBCASE("one outlier") {
        const std::vector<double> pred = {0.0, 0.0, 0.0, 6.0};
        const std::vector<double> truth = {0.0, 0.0, 0.0, 0.0};
        const auto [rmse, mae] = regression_metrics(pred, truth);
        CHECK(rmse == doctest::Approx(3.0));
        CHECK(mae == doctest::Approx(1.5));
    }
    SUBCASE("rmse never below mae") {
        std::mt19937_64 rng(3);
        std::normal_distribution<double> normal;
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<double> pred(17), truth(17);
            for (std::size_t i = 0; i < pred.size(); ++i) {
                pred[i] = normal(rng);
                truth[i] = normal(rng);
            }
            const auto [rmse, mae] = regression_metrics(pred, truth);
            CHECK(rmse >= mae - 1e-12);
        }
    }
    SUBCASE("empty input rejected") {
        const std::vector<double> empty;
        CHECK_THROWS_AS(regression_metrics(empty, empty), std::invalid_argument);
    }
}

TEST_CASE("detection rates") {
    const ConfusionCounts counts{9, 90, 10, 1};
    const auto rates = detection_rates(counts);
    CHECK(*rates.p_d == doctest::Approx(0.9));
    CHECK(*rates.p_fa == doctest::Approx(0.1));

    const ConfusionCounts no_misses{5, 10, 2, 0};
    CHECK(*detection_rates(no_misses).p_d == doctest::Approx(1.0));

    // recall and detection probability are the same quantity
    const auto m = classification_metrics(counts);
    CHECK(*m.recall == doctest::Approx(*rates.p_d));

    const ConfusionCounts no_positives{0, 10, 0, 0};
    CHECK_FALSE(detection_rates(no_positives).p_d.has_value());
}

TEST_CASE("improvement deltas") {
    CHECK(*improvement_delta_rate(0.93, 0.93) == doctest::Approx(0.0));
    CHECK(*improvement_delta_error(3.0, 3.0) == doctest::Approx(0.0));
    CHECK(*improvement_delta_error(2.17, 4.4) == doctest::Approx(0.507).epsilon(1e-2));
    CHECK(*improvement_delta_error(3.65, 5.0) == doctest::Approx(0.27).epsilon(1e-9));
    CHECK(*improvement_delta_rate(0.93, 0.90) == doctest::Approx(0.03));
    CHECK_FALSE(improvement_delta_error(1.0, 0.0).has_value());
    CHECK_FALSE(improvement_delta_rate(std::nullopt, 0.9).has_value());
}

TEST_CASE("study report files") {
    StudyReport report;
    report.kind = "unit_fixture";
    report.manifest = {{"seed", 5}};
    StudyRow row;
    row.axis = 3.0;
    row.label = "bin_3";
    row.values = {{"accuracy", 0.91}, {"p_d", 0.88}};
    report.rows.push_back(row);
    row.axis = 4.0;
    row.label = "bin_4";
    report.rows.push_back(row);

    const auto dir = std::filesystem::temp_directory_path() / "otdr_eval_report_test";
    std::filesystem::create_directories(dir);
    const auto base = (dir / "report").string();
    report.save(base);

    auto slurp = [](const std::string& p) {
        std::ifstream in(p);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    const auto csv = slurp(base + ".csv");
    CHECK(csv.find("accuracy") != std::string::npos);
    CHECK(csv.find("bin_4") != std::string::npos);
    const auto manifest = slurp(base + ".json");
    CHECK(manifest.find("unit_fixture") != std::string::npos);

    report.save(base + "_again");
    CHECK(slurp(base + "_again.csv") == csv);
    std::filesystem::remove_all(dir);
}

TEST_CASE("model evaluation on a tiny corpus") {
    data::Corpus corpus;
    for (int i = 0; i < 20; ++i) {
        data::WindowSample s;
        s.features.assign(35, 0.0);
        s.id_class = i % 2;
        s.position_target = 0.5;
        s.reflectance_target = 0.5;
        s.split = 2;
        s.snr_db = 10.0 + i;
        corpus.samples.push_back(s);
    }

    // Untrained all-zero model: p_event = 0.5 everywhere, not above the
    // threshold, so every sample is predicted negative.
    nn::ArchSpec arch;
    arch.lstm_units = 4;
    arch.tower_width = 3;
    const auto params = nn::zeros_like(nn::init_params(arch, {0.5, 0.3, 0.2}, 0));
    const auto m = evaluate_model(params, corpus, 2, 0.5);
    CHECK(*m.accuracy == doctest::Approx(0.5));
    // regression errors cover every labeled-positive window, detected or not
    REQUIRE(m.rmse_position_m.has_value());
    CHECK(*m.rmse_position_m == doctest::Approx(0.5 * 34 * 0.8));

    const auto binned = evaluate_by_snr_bin(params, corpus, 2, 0.5);
    CHECK(binned.size() == 20);
}
