// Command-line front end: simulate traces, build corpora, train and
// evaluate the multi-task model, run studies, detect events in trace
// files, and compare against the classical detectors.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "otdr/baselines.hpp"
#include "otdr/dataset.hpp"
#include "otdr/eval.hpp"
#include "otdr/nn.hpp"
#include "otdr/studies.hpp"
#include "otdr/trace_sim.hpp"

namespace fs = std::filesystem;
namespace sim = otdr::sim;
namespace data = otdr::data;
namespace nn = otdr::nn;
namespace eval = otdr::eval;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitDataError = 3;
constexpr int kExitNumericError = 4;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::size_t levenshtein(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

std::string nearest_key(const std::string& key, const json& defaults) {
    std::string best;
    std::size_t best_distance = std::string::npos;
    for (const auto& [candidate, _] : defaults.items()) {
        const std::size_t d = levenshtein(key, candidate);
        if (d < best_distance) {
            best_distance = d;
            best = candidate;
        }
    }
    return best;
}

/// Merge config file + key=value overrides onto the command's defaults.
/// Unknown keys are rejected with a nearest-match suggestion.
json parse_config(const json& defaults, const std::string& config_path,
                  const std::vector<std::string>& overrides, json* override_log) {
    json effective = defaults;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw ConfigError("cannot open config file: " + config_path);
        json file_config;
        try {
            file_config = json::parse(in);
        } catch (const json::parse_error& e) {
            throw ConfigError("config parse error in " + config_path + ": " + e.what());
        }
        if (!file_config.is_object()) throw ConfigError("config file must hold a JSON object");
        for (const auto& [key, value] : file_config.items()) {
            if (!defaults.contains(key))
                throw ConfigError("unknown config key '" + key + "' (did you mean '" +
                                  nearest_key(key, defaults) + "'?)");
            effective[key] = value;
        }
    }
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("override must look like key=value: " + kv);
        const std::string key = kv.substr(0, eq);
        const std::string raw = kv.substr(eq + 1);
        if (!defaults.contains(key))
            throw ConfigError("unknown config key '" + key + "' (did you mean '" +
                              nearest_key(key, defaults) + "'?)");
        json value;
        try {
            value = json::parse(raw);
        } catch (const json::parse_error&) {
            value = raw;  // plain string
        }
        effective[key] = value;
        if (override_log) (*override_log)[key] = value;
    }
    return effective;
}

void atomic_write(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write " + tmp.string());
        out << content;
    }
    fs::rename(tmp, path);
}

std::uint64_t fnv1a_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot hash missing file: " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 14];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i)
            h = (h ^ static_cast<unsigned char>(buf[i])) * 0x100000001b3ULL;
        if (in.gcount() < static_cast<std::streamsize>(sizeof(buf))) break;
    }
    return h;
}

fs::path resolve_output_dir(const std::string& out_flag) {
    if (!out_flag.empty()) return out_flag;
    if (const char* root = std::getenv("OTDR_OUTPUT_ROOT")) return root;
    return ".";
}

void write_manifest(const fs::path& dir, const std::string& command, const json& config,
                    const json& overrides, const json& inputs, const json& outputs) {
    json manifest;
    manifest["tool_version"] = kToolVersion;
    manifest["command"] = command;
    manifest["config"] = config;
    manifest["overrides"] = overrides;
    manifest["inputs"] = inputs;
    manifest["outputs"] = outputs;
    atomic_write(dir / "manifest.json", manifest.dump(2) + "\n");
}

data::GridConfig grid_from_config(const json& config) {
    auto grid = eval::grid_from_json(config);
    grid.base.validate();
    if (grid.n_traces < 0) throw ConfigError("n_traces must be >= 0");
    if (!(grid.snr_min_db <= grid.snr_max_db)) throw ConfigError("snr range inverted");
    return grid;
}

int cmd_simulate(const std::string& config_path, const std::vector<std::string>& overrides,
                 const std::string& out_flag, std::int64_t seed_flag) {
    json defaults = {{"fiber_length_m", 2000.0},
                     {"sampling_interval_m", 0.8},
                     {"pulse_width_samples", 6},
                     {"laser_power_dbm", 0.0},
                     {"attenuation_db", 0.0},
                     {"n_avg", 1},
                     {"base_noise_sigma", 1e-4},
                     {"refractive_index", 1.468},
                     {"seed", 0},
                     {"events", json::array()},  // [[position_m, reflectance_db], ...]
                     {"format", "csv"},
                     {"name", "trace"}};
    json overrides_log = json::object();
    json config = parse_config(defaults, config_path, overrides, &overrides_log);
    if (seed_flag >= 0) config["seed"] = seed_flag;

    sim::AcquisitionConfig acq;
    acq.fiber_length_m = config.at("fiber_length_m").get<double>();
    acq.sampling_interval_m = config.at("sampling_interval_m").get<double>();
    acq.pulse_width_samples = config.at("pulse_width_samples").get<int>();
    acq.laser_power_dbm = config.at("laser_power_dbm").get<double>();
    acq.attenuation_db = config.at("attenuation_db").get<double>();
    acq.n_avg = config.at("n_avg").get<std::int64_t>();
    acq.base_noise_sigma = config.at("base_noise_sigma").get<double>();
    acq.refractive_index = config.at("refractive_index").get<double>();
    acq.seed = config.at("seed").get<std::uint64_t>();
    try {
        acq.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }

    std::vector<std::pair<double, double>> events;
    for (const auto& e : config.at("events"))
        events.emplace_back(e.at(0).get<double>(), e.at(1).get<double>());

    const auto trace = sim::synthesize_trace(acq, events);
    const fs::path out_dir = resolve_output_dir(out_flag);
    fs::create_directories(out_dir);
    const bool binary = config.at("format").get<std::string>() == "bin";
    const fs::path trace_path =
        out_dir / (config.at("name").get<std::string>() + (binary ? ".otdr" : ".csv"));
    sim::save_trace(trace, trace_path.string(), binary);

    write_manifest(out_dir, "simulate", config, overrides_log, json::object(),
                   {{"trace", trace_path.string()}, {"trace_hash", fnv1a_file(trace_path)}});
    std::cout << "wrote " << trace_path.string() << " (" << trace.samples.size()
              << " samples, " << trace.events.size() << " events)\n";
    return kExitOk;
}

json grid_defaults() {
    return {{"n_traces", 6300},       {"snr_min_db", 2.0},
            {"snr_max_db", 30.0},     {"snr_skew", 1.0},
            {"reflectance_min_db", -60.0},
            {"reflectance_max_db", -14.0}, {"laser_power_min_dbm", 0.0},
            {"laser_power_max_dbm", 12.0}, {"attenuation_min_db", 0.0},
            {"attenuation_max_db", 20.0},  {"max_events", 1},
            {"window_len", 35},       {"seed", 1},
            {"fiber_length_m", 2000.0},    {"sampling_interval_m", 0.8},
            {"pulse_width_samples", 6},    {"base_noise_sigma", 1e-4}};
}

int cmd_build_corpus(const std::string& config_path, const std::vector<std::string>& overrides,
                     const std::string& out_flag, std::int64_t seed_flag) {
    json defaults = grid_defaults();
    defaults["feature_set"] = "base";
    json overrides_log = json::object();
    json config = parse_config(defaults, config_path, overrides, &overrides_log);
    if (seed_flag >= 0) config["seed"] = seed_flag;

    const auto grid = grid_from_config(config);
    const auto feature_set = data::FeatureSet::parse(config.at("feature_set").get<std::string>());
    const auto corpus = data::build_corpus(grid, feature_set);

    const fs::path out_dir = resolve_output_dir(out_flag);
    const fs::path corpus_dir = out_dir / "corpus";
    data::save_corpus(corpus, corpus_dir.string());
    write_manifest(out_dir, "build-corpus", config, overrides_log, json::object(),
                   {{"corpus", corpus_dir.string()},
                    {"samples_hash", fnv1a_file(corpus_dir / "samples.csv")},
                    {"n_samples", corpus.samples.size()}});
    std::cout << "built corpus with " << corpus.samples.size() << " samples ("
              << corpus.count_split(0) << "/" << corpus.count_split(1) << "/"
              << corpus.count_split(2) << " train/val/test)\n";
    return kExitOk;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& out_flag, std::int64_t seed_flag) {
    json defaults = {{"corpus", ""},
                     {"lstm_units", 30},
                     {"tower_width", 15},
                     {"tower_depth", 1},
                     {"loss_weights", {0.5, 0.3, 0.2}},
                     {"tasks", {true, true, true}},
                     {"learning_rate", 1e-3},
                     {"batch_size", 64},
                     {"max_epochs", 300},
                     {"patience", 20},
                     {"lr_decay", 1.0},
                     {"lr_decay_patience", 8},
                     {"min_learning_rate", 1e-5},
                     {"seed", 0},
                     {"name", "model"}};
    json overrides_log = json::object();
    json config = parse_config(defaults, config_path, overrides, &overrides_log);
    if (seed_flag >= 0) config["seed"] = seed_flag;

    const std::string corpus_path = config.at("corpus").get<std::string>();
    if (corpus_path.empty()) throw ConfigError("train requires a corpus path");
    const auto corpus = data::load_corpus(corpus_path);

    nn::ArchSpec arch;
    arch.lstm_units = config.at("lstm_units").get<int>();
    arch.tower_width = config.at("tower_width").get<int>();
    arch.tower_depth = config.at("tower_depth").get<int>();
    arch.tasks = config.at("tasks").get<std::array<bool, 3>>();
    arch.aux_width = corpus.feature_set.size();
    arch.feature_set = corpus.feature_set.descriptor();

    nn::TrainConfig cfg;
    cfg.learning_rate = config.at("learning_rate").get<double>();
    cfg.batch_size = config.at("batch_size").get<int>();
    cfg.max_epochs = config.at("max_epochs").get<int>();
    cfg.patience = config.at("patience").get<int>();
    cfg.lr_decay = config.at("lr_decay").get<double>();
    cfg.lr_decay_patience = config.at("lr_decay_patience").get<int>();
    cfg.min_learning_rate = config.at("min_learning_rate").get<double>();
    cfg.seed = config.at("seed").get<std::uint64_t>();

    const auto result = nn::train_model(
        corpus, arch, config.at("loss_weights").get<std::array<double, 3>>(), cfg);

    const fs::path out_dir = resolve_output_dir(out_flag);
    fs::create_directories(out_dir);
    const fs::path model_path = out_dir / (config.at("name").get<std::string>() + ".otdrmdl");
    json provenance = {{"corpus", corpus_path},
                       {"corpus_hash", fnv1a_file(fs::path(corpus_path) / "samples.csv")},
                       {"seed", cfg.seed},
                       {"best_epoch", result.best_epoch},
                       {"tool_version", kToolVersion}};
    nn::save_model(result.params, model_path.string(), provenance.dump());

    std::ostringstream curves;
    curves.precision(12);
    curves << "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < result.train_loss.size(); ++e)
        curves << e << ',' << result.train_loss[e] << ',' << result.val_loss[e] << '\n';
    atomic_write(out_dir / "learning_curves.csv", curves.str());

    write_manifest(out_dir, "train", config, overrides_log,
                   {{"corpus", corpus_path},
                    {"corpus_hash", fnv1a_file(fs::path(corpus_path) / "samples.csv")}},
                   {{"model", model_path.string()},
                    {"model_hash", fnv1a_file(model_path)},
                    {"best_epoch", result.best_epoch},
                    {"best_val_loss", result.val_loss[static_cast<std::size_t>(result.best_epoch)]}});
    std::cout << "trained " << result.train_loss.size() << " epochs, best epoch "
              << result.best_epoch << ", model at " << model_path.string() << "\n";
    return kExitOk;
}

json metrics_to_json(const eval::Metrics& m) {
    json out = json::object();
    auto put = [&out](const char* key, const std::optional<double>& v) {
        if (v) out[key] = *v;
    };
    put("accuracy", m.accuracy);
    put("precision", m.precision);
    put("recall", m.recall);
    put("f1", m.f1);
    if (m.accuracy_interval)
        out["accuracy_wilson"] = {m.accuracy_interval->first, m.accuracy_interval->second};
    put("rmse_position_m", m.rmse_position_m);
    put("mae_position_m", m.mae_position_m);
    put("rmse_reflectance_db", m.rmse_reflectance_db);
    put("mae_reflectance_db", m.mae_reflectance_db);
    return out;
}

int cmd_evaluate(const std::string& config_path, const std::vector<std::string>& overrides,
                 const std::string& out_flag) {
    json defaults = {{"model", ""}, {"corpus", ""}, {"threshold", 0.5}, {"split", "test"}};
    json overrides_log = json::object();
    json config = parse_config(defaults, config_path, overrides, &overrides_log);

    const auto params = nn::load_model(config.at("model").get<std::string>());
    const auto corpus = data::load_corpus(config.at("corpus").get<std::string>());
    const std::string split_name = config.at("split").get<std::string>();
    const int split = split_name == "train"  ? 0
                      : split_name == "val"  ? 1
                      : split_name == "test" ? 2
                      : split_name == "all"  ? -1
                                             : throw ConfigError("unknown split " + split_name);

    const auto metrics =
        eval::evaluate_model(params, corpus, split, config.at("threshold").get<double>());
    const fs::path out_dir = resolve_output_dir(out_flag);
    fs::create_directories(out_dir);
    atomic_write(out_dir / "metrics.json", metrics_to_json(metrics).dump(2) + "\n");
    write_manifest(out_dir, "evaluate", config, overrides_log,
                   {{"model_hash", fnv1a_file(config.at("model").get<std::string>())}},
                   {{"metrics", (out_dir / "metrics.json").string()}});
    std::cout << metrics_to_json(metrics).dump(2) << "\n";
    return kExitOk;
}

int cmd_study(const std::string& kind, const std::string& config_path,
              const std::vector<std::string>& overrides, const std::string& out_flag,
              std::int64_t seed_flag) {
    json defaults = grid_defaults();
    defaults["model"] = "";
    defaults["corpus"] = "";
    defaults["n_seeds"] = 5;
    defaults["loss_weights"] = {0.5, 0.3, 0.2};
    defaults["lengths"] = {35, 75, 100, 150, 200};
    defaults["feature_sets"] = {"base", "laser_power+n_avg+attenuation", "snr",
                                "snr+laser_power+n_avg+attenuation", "snr+laser_power+n_avg"};
    defaults["train"] = json::object();
    json overrides_log = json::object();
    json config = parse_config(defaults, config_path, overrides, &overrides_log);
    if (seed_flag >= 0) config["seed"] = seed_flag;
    if (config.at("model").get<std::string>().empty()) config.erase("model");
    if (config.at("corpus").get<std::string>().empty()) config.erase("corpus");

    auto report = eval::run_study(kind, config);
    report.manifest["config"] = config;
    report.manifest["tool_version"] = kToolVersion;

    const fs::path out_dir = resolve_output_dir(out_flag);
    fs::create_directories(out_dir);
    const std::string basename = (out_dir / ("study_" + kind)).string();
    report.save(basename + ".tmp");
    fs::rename(basename + ".tmp.csv", basename + ".csv");
    fs::rename(basename + ".tmp.json", basename + ".json");
    write_manifest(out_dir, "study", config, overrides_log, json::object(),
                   {{"report_csv", basename + ".csv"}, {"report_json", basename + ".json"}});
    std::cout << "study '" << kind << "' written to " << basename << ".{csv,json}\n";
    return kExitOk;
}

struct DetectedEvent {
    double position_m;
    double p_event;
    double reflectance_db;
};

int cmd_detect(const std::string& model_path, const std::string& trace_path,
               double reflector_pos_m, bool integrity_only, double threshold, int stride_flag,
               const std::string& out_flag) {
    const auto params = nn::load_model(model_path);
    const auto trace = sim::load_trace(trace_path);
    const int window_len = 35;  // the model accepts any length; detection uses its native one
    if (params.arch.aux_width != 0)
        throw DataError("detect requires an aux-free model (setup features unknown in operation)");

    const int pw = trace.config.pulse_width_samples;
    const double dx = trace.config.sampling_interval_m;
    const int stride = stride_flag > 0 ? stride_flag : window_len / 2;

    json report;
    report["trace"] = trace_path;
    report["model"] = model_path;

    // Link-integrity check first when the reference reflector position is
    // known: only the window around that position is inspected.
    if (reflector_pos_m >= 0.0) {
        const auto ref_index = static_cast<std::int64_t>(std::llround(reflector_pos_m / dx));
        const auto origin = std::clamp<std::int64_t>(
            ref_index - window_len / 2, 0,
            static_cast<std::int64_t>(trace.samples.size()) - window_len);
        data::WindowSample window;
        window.features = data::normalize_window(
            std::span<const double>(trace.samples)
                .subspan(static_cast<std::size_t>(origin), static_cast<std::size_t>(window_len)));
        const auto pred = nn::model_forward(window, params);
        const bool ok = pred.p_event > threshold;
        report["integrity"] = {{"reflector_position_m", reflector_pos_m},
                               {"p_event", pred.p_event},
                               {"reflectance_db", data::denormalize_reflectance_db(pred.reflectance)},
                               {"pass", ok}};
        std::cout << "link integrity at " << reflector_pos_m << " m: "
                  << (ok ? "PASS" : "FAIL") << " (p_event " << pred.p_event << ")\n";
        if (integrity_only) {
            const fs::path out_dir = resolve_output_dir(out_flag);
            fs::create_directories(out_dir);
            atomic_write(out_dir / "detect_report.json", report.dump(2) + "\n");
            return kExitOk;
        }
    }

    const auto windows = data::segment_trace(trace, window_len, stride);
    struct Candidate {
        double position_index;
        double p_event;
        double reflectance_db;
    };
    std::vector<Candidate> candidates;
    for (const auto& w : windows) {
        const auto pred = nn::model_forward(w, params);
        if (pred.p_event <= threshold) continue;
        candidates.push_back(
            {static_cast<double>(w.window_origin) + pred.position * (window_len - 1),
             pred.p_event, data::denormalize_reflectance_db(pred.reflectance)});
    }

    // Non-maximum suppression on p_event: strongest window wins, neighbors
    // within one pulse width are merged into it.
    std::sort(candidates.begin(), candidates.end(),
              [](const Candidate& a, const Candidate& b) { return a.p_event > b.p_event; });
    std::vector<Candidate> accepted;
    for (const auto& c : candidates) {
        const bool merged = std::any_of(
            accepted.begin(), accepted.end(), [&c, pw](const Candidate& a) {
                return std::abs(a.position_index - c.position_index) <= pw;
            });
        if (!merged) accepted.push_back(c);
    }
    std::sort(accepted.begin(), accepted.end(), [](const Candidate& a, const Candidate& b) {
        return a.position_index < b.position_index;
    });

    report["n_events"] = accepted.size();
    report["events"] = json::array();
    for (const auto& c : accepted)
        report["events"].push_back({{"position_m", c.position_index * dx},
                                    {"p_event", c.p_event},
                                    {"reflectance_db", c.reflectance_db}});

    const fs::path out_dir = resolve_output_dir(out_flag);
    fs::create_directories(out_dir);
    atomic_write(out_dir / "detect_report.json", report.dump(2) + "\n");
    std::cout << "detected " << accepted.size() << " event(s)\n";
    for (const auto& c : accepted)
        std::cout << "  " << c.position_index * dx << " m  p=" << c.p_event
                  << "  R=" << c.reflectance_db << " dB\n";
    return kExitOk;
}

int cmd_compare(const std::string& model_path, double pfa, const std::string& config_path,
                const std::vector<std::string>& overrides, const std::string& out_flag,
                std::int64_t seed_flag) {
    json defaults = {{"snr_bins_db", {2, 3, 4, 5, 6, 8, 10, 12, 15, 20}},
                     {"windows_per_bin", 400},
                     {"pulse_width_samples", 6},
                     {"ml_window_len", 35},
                     {"baseline_window_len", 35},
                     {"two_point_half_width", 5},
                     {"n_calibration_windows", 2000},
                     {"sampling_interval_m", 0.8},
                     {"n_avg_sweep", {1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048, 4096}},
                     {"snr_at_navg1_db", 0.0},
                     {"fiber_length_m", 8785.0},
                     {"refractive_index", 1.468},
                     {"seed", 99}};
    json overrides_log = json::object();
    json config = parse_config(defaults, config_path, overrides, &overrides_log);
    if (seed_flag >= 0) config["seed"] = seed_flag;

    eval::CompareSpec spec;
    spec.snr_bins_db = config.at("snr_bins_db").get<std::vector<int>>();
    spec.windows_per_bin = config.at("windows_per_bin").get<int>();
    spec.pulse_width_samples = config.at("pulse_width_samples").get<int>();
    spec.ml_window_len = config.at("ml_window_len").get<int>();
    spec.baseline_window_len = config.at("baseline_window_len").get<int>();
    spec.two_point_half_width = config.at("two_point_half_width").get<int>();
    spec.target_pfa = pfa;
    spec.n_calibration_windows = config.at("n_calibration_windows").get<int>();
    spec.sampling_interval_m = config.at("sampling_interval_m").get<double>();
    spec.n_avg_sweep = config.at("n_avg_sweep").get<std::vector<double>>();
    spec.snr_at_navg1_db = config.at("snr_at_navg1_db").get<double>();
    spec.fiber_length_m = config.at("fiber_length_m").get<double>();
    spec.refractive_index = config.at("refractive_index").get<double>();
    spec.seed = config.at("seed").get<std::uint64_t>();

    const auto params = nn::load_model(model_path);
    auto report = eval::compare_detectors(params, spec);
    report.manifest["model_hash"] = fnv1a_file(model_path);
    report.manifest["tool_version"] = kToolVersion;

    const fs::path out_dir = resolve_output_dir(out_flag);
    fs::create_directories(out_dir);
    const std::string basename = (out_dir / "study_compare").string();
    report.save(basename + ".tmp");
    fs::rename(basename + ".tmp.csv", basename + ".csv");
    fs::rename(basename + ".tmp.json", basename + ".json");
    write_manifest(out_dir, "compare", config, overrides_log,
                   {{"model_hash", fnv1a_file(model_path)}},
                   {{"report_csv", basename + ".csv"}});
    std::cout << "comparison written to " << basename << ".{csv,json}\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"OTDR reflective-fault toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::vector<std::string> overrides;
    std::int64_t seed_flag = -1;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file");
        sub->add_option("--set", overrides, "key=value overrides (repeatable)");
        sub->add_option("--out", out_dir, "output directory (default $OTDR_OUTPUT_ROOT or .)");
        sub->add_option("--seed", seed_flag, "seed override");
    };

    auto* simulate = app.add_subcommand("simulate", "synthesize one trace file");
    add_common(simulate);
    auto* build = app.add_subcommand("build-corpus", "simulate traces and extract windows");
    add_common(build);
    auto* train = app.add_subcommand("train", "train the multi-task model on a corpus");
    add_common(train);
    auto* evaluate = app.add_subcommand("evaluate", "metrics of a model on a corpus split");
    add_common(evaluate);

    std::string study_kind;
    auto* study = app.add_subcommand("study", "run one study of the evaluation matrix");
    study->add_option("--kind", study_kind,
                      "snr_sweep | feature_ablation | sequence_length | robustness | "
                      "single_vs_multi")
        ->required();
    add_common(study);

    std::string model_path, trace_path;
    double reflector_pos = -1.0, threshold = 0.5;
    int stride = 0;
    bool integrity_only = false;
    auto* detect = app.add_subcommand("detect", "detect events in a trace file");
    detect->add_option("--model", model_path, "model file")->required();
    detect->add_option("--trace", trace_path, "trace file")->required();
    detect->add_option("--reflector-pos", reflector_pos,
                       "reference reflector position in meters (link-integrity check)");
    detect->add_flag("--integrity-only", integrity_only, "stop after the integrity check");
    detect->add_option("--threshold", threshold, "detection probability threshold");
    detect->add_option("--stride", stride, "window stride (default window_len/2)");
    detect->add_option("--out", out_dir, "output directory");

    double pfa = 0.1;
    auto* compare = app.add_subcommand("compare", "ML model vs classical detectors");
    compare->add_option("--model", model_path, "model file")->required();
    compare->add_option("--pfa", pfa, "target false alarm probability");
    add_common(compare);

    CLI11_PARSE(app, argc, argv);

    try {
        if (simulate->parsed()) return cmd_simulate(config_path, overrides, out_dir, seed_flag);
        if (build->parsed()) return cmd_build_corpus(config_path, overrides, out_dir, seed_flag);
        if (train->parsed()) return cmd_train(config_path, overrides, out_dir, seed_flag);
        if (evaluate->parsed()) return cmd_evaluate(config_path, overrides, out_dir);
        if (study->parsed())
            return cmd_study(study_kind, config_path, overrides, out_dir, seed_flag);
        if (detect->parsed())
            return cmd_detect(model_path, trace_path, reflector_pos, integrity_only, threshold,
                              stride, out_dir);
        if (compare->parsed())
            return cmd_compare(model_path, pfa, config_path, overrides, out_dir, seed_flag);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const nn::TrainingFailure& e) {
        std::cerr << "numeric failure: " << e.what() << " (epoch " << e.epoch << ")\n";
        return kExitNumericError;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitDataError;
    } catch (const std::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitDataError;
    }
    return kExitOk;
}
