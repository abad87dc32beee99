#include "otdr/eval.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace otdr::eval {

void ConfusionCounts::add(bool truth_positive, bool predicted_positive) {
    if (truth_positive)
        predicted_positive ? ++n_tp : ++n_fn;
    else
        predicted_positive ? ++n_fp : ++n_tn;
}

Metrics classification_metrics(const ConfusionCounts& counts) {
    if (counts.total() <= 0) throw std::invalid_argument("empty confusion counts");
    Metrics m;
    m.accuracy = static_cast<double>(counts.n_tp + counts.n_tn) / counts.total();
    if (counts.n_tp + counts.n_fp > 0)
        m.precision = static_cast<double>(counts.n_tp) / (counts.n_tp + counts.n_fp);
    if (counts.n_tp + counts.n_fn > 0)
        m.recall = static_cast<double>(counts.n_tp) / (counts.n_tp + counts.n_fn);
    if (m.precision && m.recall && *m.precision + *m.recall > 0.0)
        m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
    m.accuracy_interval = wilson_interval(counts.n_tp + counts.n_tn, counts.total());
    return m;
}

std::pair<double, double> wilson_interval(long successes, long trials, double z) {
    if (trials < 1 || successes < 0 || successes > trials)
        throw std::invalid_argument("wilson_interval needs 0 <= successes <= trials, trials >= 1");
    const double n = static_cast<double>(trials);
    const double p_hat = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (p_hat + z2 / (2.0 * n)) / denom;
    const double half =
        (z / denom) * std::sqrt(p_hat * (1.0 - p_hat) / n + z2 / (4.0 * n * n));
    return {center - half, center + half};
}

std::pair<double, double> regression_metrics(std::span<const double> pred,
                                             std::span<const double> truth) {
    if (pred.empty() || pred.size() != truth.size())
        throw std::invalid_argument("regression_metrics needs equal non-empty inputs");
    double sum_sq = 0.0, sum_abs = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = pred[i] - truth[i];
        sum_sq += e * e;
        sum_abs += std::abs(e);
    }
    const double n = static_cast<double>(pred.size());
    return {std::sqrt(sum_sq / n), sum_abs / n};
}

DetectionRates detection_rates(const ConfusionCounts& counts) {
    DetectionRates rates;
    if (counts.n_tp + counts.n_fn > 0)
        rates.p_d = static_cast<double>(counts.n_tp) / (counts.n_tp + counts.n_fn);
    if (counts.n_fp + counts.n_tn > 0)
        rates.p_fa = static_cast<double>(counts.n_fp) / (counts.n_fp + counts.n_tn);
    return rates;
}

std::optional<double> improvement_delta_rate(std::optional<double> multi,
                                             std::optional<double> single_task) {
    if (!multi || !single_task) return std::nullopt;
    return *multi - *single_task;
}

std::optional<double> improvement_delta_error(std::optional<double> multi,
                                              std::optional<double> single_task) {
    if (!multi || !single_task || *single_task == 0.0) return std::nullopt;
    return 1.0 - *multi / *single_task;
}

void StudyReport::save(const std::string& basename) const {
    std::ofstream csv(basename + ".csv");
    if (!csv) throw std::runtime_error("cannot write study csv: " + basename);
    csv.precision(12);
    csv << "axis,label,metric,value\n";
    for (const auto& row : rows)
        for (const auto& [metric, value] : row.values)
            csv << row.axis << ',' << row.label << ',' << metric << ',' << value << '\n';

    std::ofstream mf(basename + ".json");
    if (!mf) throw std::runtime_error("cannot write study manifest: " + basename);
    nlohmann::json out = manifest;
    out["kind"] = kind;
    mf << out.dump(2) << '\n';
}

namespace {

struct SplitEval {
    ConfusionCounts counts;
    std::vector<double> pos_pred_m, pos_truth_m;
    std::vector<double> refl_pred_db, refl_truth_db;
};

SplitEval collect(const nn::ModelParams& params, const data::Corpus& corpus,
                  std::span<const std::size_t> indices, double threshold,
                  double sampling_interval_m) {
    const nn::BatchOutput out = nn::predict_corpus(params, corpus, indices);
    SplitEval ev;
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto& s = corpus.samples[indices[i]];
        const bool truth = s.id_class == 1;
        bool predicted = truth;  // regression-only models score regressions on all positives
        if (out.p_event.size())
            predicted = out.p_event[static_cast<Eigen::Index>(i)] > threshold;
        if (out.p_event.size()) ev.counts.add(truth, predicted);
        if (!truth) continue;
        if (out.position.size()) {
            ev.pos_pred_m.push_back(data::denormalize_position_m(
                out.position[static_cast<Eigen::Index>(i)], corpus.window_len,
                sampling_interval_m));
            ev.pos_truth_m.push_back(data::denormalize_position_m(
                s.position_target, corpus.window_len, sampling_interval_m));
        }
        if (out.reflectance.size()) {
            ev.refl_pred_db.push_back(
                data::denormalize_reflectance_db(out.reflectance[static_cast<Eigen::Index>(i)]));
            ev.refl_truth_db.push_back(data::denormalize_reflectance_db(s.reflectance_target));
        }
    }
    return ev;
}

Metrics metrics_from(const SplitEval& ev) {
    Metrics m;
    if (ev.counts.total() > 0) m = classification_metrics(ev.counts);
    if (!ev.pos_pred_m.empty()) {
        auto [rmse, mae] = regression_metrics(ev.pos_pred_m, ev.pos_truth_m);
        m.rmse_position_m = rmse;
        m.mae_position_m = mae;
    }
    if (!ev.refl_pred_db.empty()) {
        auto [rmse, mae] = regression_metrics(ev.refl_pred_db, ev.refl_truth_db);
        m.rmse_reflectance_db = rmse;
        m.mae_reflectance_db = mae;
    }
    return m;
}

}  // namespace

Metrics evaluate_model(const nn::ModelParams& params, const data::Corpus& corpus, int split,
                       double threshold, double sampling_interval_m) {
    const auto indices = nn::split_indices(corpus, split);
    if (indices.empty()) throw std::invalid_argument("requested split is empty");
    return metrics_from(collect(params, corpus, indices, threshold, sampling_interval_m));
}

std::map<int, Metrics> evaluate_by_snr_bin(const nn::ModelParams& params,
                                           const data::Corpus& corpus, int split,
                                           double threshold, double sampling_interval_m) {
    const auto indices = nn::split_indices(corpus, split);
    std::map<int, std::vector<std::size_t>> bins;
    for (std::size_t idx : indices)
        // histogram convention: a bin is labeled by its lower edge, so bin b
        // holds samples with snr in [b, b + 1)
        bins[static_cast<int>(std::floor(corpus.samples[idx].snr_db))].push_back(idx);

    std::map<int, Metrics> out;
    for (const auto& [bin, bin_indices] : bins)
        out[bin] = metrics_from(collect(params, corpus, bin_indices, threshold,
                                        sampling_interval_m));
    return out;
}

}  // namespace otdr::eval
