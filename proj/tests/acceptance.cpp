// Acceptance suite: exact formula oracles, gradient verification, full-scale
// training quality, and the headline trends of the study matrix. Prints one
// PASS/FAIL line per criterion and exits nonzero if any fail.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "otdr/dataset.hpp"
#include "otdr/eval.hpp"
#include "otdr/nn.hpp"
#include "otdr/studies.hpp"
#include "otdr/trace_sim.hpp"

namespace fs = std::filesystem;
using namespace otdr;

namespace {

int g_failures = 0;

void report(int criterion, const char* title, bool pass, const std::string& detail = "") {
    std::printf("ACCEPTANCE %2d %-28s %s%s%s\n", criterion, title, pass ? "PASS" : "FAIL",
                detail.empty() ? "" : "  ", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), pattern, a, b, c);
    return buf;
}

// --------------------------------------------------------------------------

bool formula_oracles(std::string& detail) {
    bool ok = true;

    // Noise estimator vs an independent two-pass variance oracle.
    std::mt19937_64 rng(12);
    std::normal_distribution<double> normal(0.3, 1.7);
    sim::OtdrTrace trace;
    trace.samples.resize(2500);
    for (auto& x : trace.samples) x = normal(rng);
    const double est = sim::estimate_noise_sigma(trace, 1000);
    double mean = 0.0;
    for (std::size_t i = 1500; i < 2500; ++i) mean += trace.samples[i];
    mean /= 1000.0;
    double var = 0.0;
    for (std::size_t i = 1500; i < 2500; ++i)
        var += (trace.samples[i] - mean) * (trace.samples[i] - mean);
    const double oracle = std::sqrt(var / 1000.0);
    ok &= std::abs(est - oracle) <= 1e-12 * oracle;

    // Parameter-count formulas.
    nn::ArchSpec arch;
    const auto counts = nn::count_weights(arch);
    ok &= counts.w_lstm_formula == 4710;
    ok &= counts.w_task_formula == 465;

    // Acquisition-time formula.
    const double tau = sim::averaging_time(62, 8785, 1.468);
    ok &= std::abs(tau - 5.33e-3) <= 1e-3 * 5.33e-3;

    // Improvement ratios from the published comparison table.
    const double d_pos = *eval::improvement_delta_error(2.17, 4.4);
    const double d_refl = *eval::improvement_delta_error(3.65, 5.0);
    ok &= std::abs(d_pos - 0.507) < 5e-4;
    ok &= std::abs(d_refl - 0.27) < 1e-12;

    detail = fmt("tau=%.4e d_pos=%.4f d_refl=%.3f", tau, d_pos, d_refl);
    return ok;
}

bool gradient_check(std::string& detail) {
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        nn::ArchSpec arch;
        arch.lstm_units = 4;
        arch.tower_width = 3;
        auto params = nn::init_params(arch, {0.5, 0.3, 0.2}, seed);

        std::mt19937_64 rng(seed + 50);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        nn::Batch batch;
        const int B = 6, L = 7;
        batch.features.resize(B, L);
        batch.aux.resize(B, 0);
        batch.id_class.resize(B);
        batch.position.resize(B);
        batch.reflectance.resize(B);
        for (int b = 0; b < B; ++b) {
            for (int t = 0; t < L; ++t) batch.features(b, t) = unit(rng);
            batch.id_class[b] = (b % 2 == 0) ? 1.0 : 0.0;
            batch.position[b] = unit(rng);
            batch.reflectance[b] = unit(rng);
        }

        auto grad = nn::zeros_like(params);
        nn::backprop_gradients(batch, params, grad);
        const auto grad_blocks = grad.param_blocks();
        auto blocks = params.param_blocks();
        const double eps = 1e-5;
        for (std::size_t blk = 0; blk < blocks.size(); ++blk) {
            for (std::size_t i = 0; i < blocks[blk].size(); ++i) {
                double& w = blocks[blk][i];
                const double saved = w;
                w = saved + eps;
                const double up =
                    nn::multitask_loss(nn::batch_forward(batch, params), batch, params.loss_weights);
                w = saved - eps;
                const double down =
                    nn::multitask_loss(nn::batch_forward(batch, params), batch, params.loss_weights);
                w = saved;
                const double fd = (up - down) / (2.0 * eps);
                const double bp = grad_blocks[blk][i];
                worst = std::max(worst,
                                 std::abs(fd - bp) / std::max(1e-6, std::abs(fd) + std::abs(bp)));
            }
        }
    }
    detail = fmt("max_rel_err=%.2e", worst);
    return worst < 1e-4;
}

}  // namespace

int main() {
    std::string detail;

    report(1, "formula oracles", formula_oracles(detail), detail);
    report(2, "gradient check", gradient_check(detail), detail);

    // Full-scale reference grid. The corpus leans toward the low-SNR end,
    // where detection is actually contested; the nominal range stays 2-30dB.
    data::GridConfig grid;
    grid.seed = 20260823;
    grid.snr_skew = 1.6;

    nn::ArchSpec arch;
    nn::TrainConfig cfg;
    cfg.max_epochs = 150;
    cfg.patience = 20;
    cfg.lr_decay = 0.5;
    cfg.seed = 7;

    // Criterion 3 trains the reference architecture without setup features.
    const auto corpus = data::build_corpus(grid, data::FeatureSet{});
    const auto trained = nn::train_model(corpus, arch, {0.5, 0.3, 0.2}, cfg);

    {
        const auto m = eval::evaluate_model(trained.params, corpus, 2);
        const bool ok = m.accuracy && *m.accuracy >= 0.88 && m.rmse_position_m &&
                        *m.rmse_position_m <= 4.0 && m.rmse_reflectance_db &&
                        *m.rmse_reflectance_db <= 5.0;
        report(3, "full-scale training", ok,
               fmt("acc=%.4f rmse_pos=%.2fm rmse_refl=%.2fdB", m.accuracy.value_or(-1),
                   m.rmse_position_m.value_or(-1), m.rmse_reflectance_db.value_or(-1)));
    }

    // The operational detector carries the acquisition SNR as a setup
    // feature; criteria 4, 7 and 8 exercise it.
    data::FeatureSet snr_fs;
    snr_fs.snr = true;
    const auto snr_corpus = data::build_corpus(grid, snr_fs);
    nn::ArchSpec snr_arch = arch;
    snr_arch.aux_width = 1;
    snr_arch.feature_set = snr_fs.descriptor();
    const auto detector = nn::train_model(snr_corpus, snr_arch, {0.5, 0.3, 0.2}, cfg);

    {
        const auto bins = eval::evaluate_by_snr_bin(detector.params, snr_corpus, 2);
        bool ok = true;
        double acc3 = -1.0, min_high = 1.0;
        std::vector<std::pair<int, double>> acc;
        for (const auto& [bin, m] : bins)
            if (m.accuracy) acc.emplace_back(bin, *m.accuracy);
        for (std::size_t i = 0; i < acc.size(); ++i)
            for (std::size_t j = i + 1; j < acc.size(); ++j)
                if (acc[j].second < acc[i].second - 0.02) ok = false;
        for (const auto& [bin, a] : acc) {
            if (bin == 3) acc3 = a;
            if (bin > 5) {
                min_high = std::min(min_high, a);
                if (a < 0.97) ok = false;
            }
        }
        if (acc3 >= 0.0 && acc3 < 0.90) ok = false;
        report(4, "snr accuracy trend", ok,
               fmt("acc@3dB=%.3f min_acc>5dB=%.3f", acc3, min_high));
    }

    // Reduced grid for the re-training studies (criteria 5 and 6).
    data::GridConfig small_grid;
    small_grid.n_traces = 1500;
    small_grid.seed = 31;
    nn::TrainConfig small_cfg;
    small_cfg.max_epochs = 150;
    small_cfg.patience = 30;

    {
        const auto small_corpus = data::build_corpus(small_grid, data::FeatureSet{});
        std::vector<double> multi_rmse, single_rmse;
        for (int s = 0; s < 5; ++s) {
            nn::TrainConfig c = small_cfg;
            c.seed = 200 + static_cast<std::uint64_t>(s);

            const auto multi = nn::train_model(small_corpus, arch, {0.5, 0.3, 0.2}, c);
            multi_rmse.push_back(
                *eval::evaluate_model(multi.params, small_corpus, 2).rmse_position_m);

            nn::ArchSpec pos_only = arch;
            pos_only.tasks = {false, true, false};
            const auto single = nn::train_model(small_corpus, pos_only, {0.0, 1.0, 0.0}, c);
            single_rmse.push_back(
                *eval::evaluate_model(single.params, small_corpus, 2).rmse_position_m);
        }
        const double m_mean =
            std::accumulate(multi_rmse.begin(), multi_rmse.end(), 0.0) / 5.0;
        const double s_mean =
            std::accumulate(single_rmse.begin(), single_rmse.end(), 0.0) / 5.0;
        report(5, "multitask benefit", m_mean < s_mean,
               fmt("rmse_pos multi=%.2fm single=%.2fm", m_mean, s_mean));
    }

    {
        const auto ablation = eval::run_feature_ablation(
            small_grid, small_cfg, {0.5, 0.3, 0.2}, 5,
            {"base", "snr", "laser_power+n_avg+attenuation"});
        double acc_base = -1.0, acc_snr = -1.0, acc_setup = -1.0;
        for (const auto& row : ablation.rows) {
            if (row.label == "base") acc_base = row.values.at("accuracy");
            if (row.label == "snr") acc_snr = row.values.at("accuracy");
            if (row.label == "laser_power+n_avg+attenuation")
                acc_setup = row.values.at("accuracy");
        }
        const double gain_snr = acc_snr - acc_base;
        const double gain_setup = acc_setup - acc_base;
        report(6, "feature ablation", gain_snr > gain_setup,
               fmt("gain_snr=%+.4f gain_setup=%+.4f", gain_snr, gain_setup));
    }

    // Detector comparison, shared by criteria 7, 8, 9.
    eval::CompareSpec compare_spec;
    compare_spec.seed = 99;
    const auto comparison = eval::compare_detectors(detector.params, compare_spec);
    auto row_value = [&comparison](const std::string& label, double axis, const char* key) {
        for (const auto& row : comparison.rows)
            if (row.label == label && row.axis == axis) return row.values.at(key);
        throw std::runtime_error("missing comparison row");
    };

    {
        bool pd_ok = true;
        std::string pd_detail;
        for (int bin : {2, 3, 4, 5}) {
            const double pd_ml = row_value("ml", bin, "p_d");
            const double pd_r1 = row_value("r1msde", bin, "p_d");
            if (pd_ml < pd_r1) pd_ok = false;
            pd_detail += fmt("%.0fdB:%.2f/%.2f ", bin, pd_ml, pd_r1);
        }
        double ml_rmse = 0.0, r1_rmse = 0.0;
        int n_bins = 0;
        for (int bin : {2, 3, 4, 5, 6, 8, 10}) {
            ml_rmse += row_value("ml", bin, "rmse_position_m");
            r1_rmse += row_value("r1msde", bin, "rmse_position_m");
            ++n_bins;
        }
        ml_rmse /= n_bins;
        r1_rmse /= n_bins;
        const bool rmse_ok = ml_rmse < r1_rmse;
        report(7, "baseline comparison", pd_ok && rmse_ok,
               pd_detail + fmt("rmse ml=%.2fm r1=%.2fm", ml_rmse, r1_rmse));
    }

    {
        const double ml_navg = comparison.manifest.at("ml_navg_90").get<double>();
        const double r1_navg = comparison.manifest.at("r1msde_navg_90").get<double>();
        const bool ok = ml_navg > 0.0 && r1_navg > 0.0 && ml_navg < r1_navg;
        const double ml_tau = sim::averaging_time(std::max(ml_navg, 0.0),
                                                  compare_spec.fiber_length_m,
                                                  compare_spec.refractive_index);
        const double r1_tau = sim::averaging_time(std::max(r1_navg, 0.0),
                                                  compare_spec.fiber_length_m,
                                                  compare_spec.refractive_index);
        report(8, "averaging-time trend", ok,
               fmt("n_avg@90%%: ml=%.0f (%.3fs) r1=%.0f", ml_navg, ml_tau, r1_navg) +
                   fmt(" (%.3fs)", r1_tau));
    }

    {
        const double pfa_r1 = comparison.manifest.at("held_out_pfa").at("r1msde").get<double>();
        const double pfa_tp =
            comparison.manifest.at("held_out_pfa").at("two_point").get<double>();
        const bool ok = std::abs(pfa_r1 - 0.10) <= 0.02 && std::abs(pfa_tp - 0.10) <= 0.02;
        report(9, "calibration property", ok,
               fmt("pfa r1msde=%.3f two_point=%.3f", pfa_r1, pfa_tp));
    }

    {
        const auto dir = fs::temp_directory_path() / "otdr_acceptance_determinism";
        fs::remove_all(dir);
        fs::create_directories(dir);

        data::GridConfig tiny = small_grid;
        tiny.n_traces = 120;
        const auto tiny_corpus = data::build_corpus(tiny, data::FeatureSet{});
        nn::TrainConfig tiny_cfg;
        tiny_cfg.max_epochs = 5;
        tiny_cfg.patience = 5;
        tiny_cfg.seed = 55;
        nn::ArchSpec tiny_arch;
        tiny_arch.lstm_units = 8;
        tiny_arch.tower_width = 4;

        auto slurp = [](const fs::path& p) {
            std::ifstream in(p, std::ios::binary);
            std::stringstream ss;
            ss << in.rdbuf();
            return ss.str();
        };

        bool ok = true;
        std::string model_a, report_a;
        for (int run = 0; run < 2; ++run) {
            const auto result = nn::train_model(tiny_corpus, tiny_arch, {0.5, 0.3, 0.2}, tiny_cfg);
            const auto model_path = dir / "model.bin";
            nn::save_model(result.params, model_path.string(), "{\"run\":\"determinism\"}");
            const auto study = eval::run_snr_sweep(result.params, tiny_corpus);
            study.save((dir / "sweep").string());
            const auto model_bytes = slurp(model_path);
            const auto report_bytes = slurp(dir / "sweep.csv") + slurp(dir / "sweep.json");
            if (run == 0) {
                model_a = model_bytes;
                report_a = report_bytes;
            } else {
                ok = model_bytes == model_a && report_bytes == report_a;
            }
        }
        fs::remove_all(dir);
        report(10, "determinism", ok);
    }

    if (g_failures > 0) {
        std::printf("%d acceptance criteria FAILED\n", g_failures);
        return 1;
    }
    std::printf("all acceptance criteria passed\n");
    return 0;
}
