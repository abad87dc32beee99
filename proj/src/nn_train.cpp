#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "otdr/nn.hpp"

namespace otdr::nn {

using nlohmann::json;

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || batch_size < 1 || max_epochs < 1 || patience < 1 ||
        !(adam_eps > 0.0))
        throw std::invalid_argument("train config fields must be positive");
    if (!(lr_decay > 0.0) || lr_decay > 1.0 || lr_decay_patience < 1 ||
        !(min_learning_rate > 0.0))
        throw std::invalid_argument("learning rate decay fields out of range");
}

std::vector<std::size_t> split_indices(const data::Corpus& corpus, int split) {
    std::vector<std::size_t> indices;
    for (std::size_t i = 0; i < corpus.samples.size(); ++i)
        if (split < 0 || corpus.samples[i].split == split) indices.push_back(i);
    return indices;
}

BatchOutput predict_corpus(const ModelParams& params, const data::Corpus& corpus,
                           std::span<const std::size_t> indices) {
    constexpr std::size_t kChunk = 2048;
    BatchOutput out;
    const auto& arch = params.arch;
    const auto n = static_cast<Eigen::Index>(indices.size());
    if (arch.tasks[kTaskDetection]) out.p_event.resize(n);
    if (arch.tasks[kTaskPosition]) out.position.resize(n);
    if (arch.tasks[kTaskReflectance]) out.reflectance.resize(n);

    for (std::size_t start = 0; start < indices.size(); start += kChunk) {
        const std::size_t count = std::min(kChunk, indices.size() - start);
        const Batch batch = make_batch(corpus, indices.subspan(start, count));
        const BatchOutput chunk = batch_forward(batch, params);
        const auto offset = static_cast<Eigen::Index>(start);
        const auto len = static_cast<Eigen::Index>(count);
        if (chunk.p_event.size()) out.p_event.segment(offset, len) = chunk.p_event;
        if (chunk.position.size()) out.position.segment(offset, len) = chunk.position;
        if (chunk.reflectance.size()) out.reflectance.segment(offset, len) = chunk.reflectance;
    }
    return out;
}

namespace {

double evaluate_loss(const ModelParams& params, const data::Corpus& corpus,
                     std::span<const std::size_t> indices) {
    constexpr std::size_t kChunk = 2048;
    double total = 0.0;
    for (std::size_t start = 0; start < indices.size(); start += kChunk) {
        const std::size_t count = std::min(kChunk, indices.size() - start);
        const Batch batch = make_batch(corpus, indices.subspan(start, count));
        total += multitask_loss(batch_forward(batch, params), batch, params.loss_weights) *
                 static_cast<double>(count);
    }
    return total / static_cast<double>(indices.size());
}

}  // namespace

TrainResult train_model(const data::Corpus& corpus, const ArchSpec& arch,
                        std::array<double, 3> loss_weights, const TrainConfig& cfg) {
    cfg.validate();
    arch.validate();
    if (arch.aux_width != corpus.feature_set.size())
        throw std::invalid_argument("architecture aux width does not match corpus feature set");

    auto train_idx = split_indices(corpus, 0);
    auto val_idx = split_indices(corpus, 1);
    if (train_idx.empty() || val_idx.empty())
        throw std::invalid_argument("corpus needs non-empty train and val splits");

    ModelParams params = init_params(arch, loss_weights, cfg.seed);
    ModelParams adam_m = zeros_like(params);
    ModelParams adam_v = zeros_like(params);

    TrainResult result;
    double best_val = std::numeric_limits<double>::infinity();
    int epochs_since_best = 0;
    double learning_rate = cfg.learning_rate;
    long step = 0;

    std::mt19937_64 rng(cfg.seed ^ 0x7261696e6d6c31ULL);
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::shuffle(train_idx.begin(), train_idx.end(), rng);

        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < train_idx.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t count =
                std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size),
                                      train_idx.size() - start);
            const Batch batch =
                make_batch(corpus, std::span<const std::size_t>(train_idx).subspan(start, count));
            ModelParams grad = zeros_like(params);
            epoch_loss += backprop_gradients(batch, params, grad) * static_cast<double>(count);
            seen += count;

            ++step;
            const double bias1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
            const double bias2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
            auto p_blocks = params.param_blocks();
            auto g_blocks = grad.param_blocks();
            auto m_blocks = adam_m.param_blocks();
            auto v_blocks = adam_v.param_blocks();
            for (std::size_t b = 0; b < p_blocks.size(); ++b) {
                auto p = p_blocks[b];
                auto g = g_blocks[b];
                auto m = m_blocks[b];
                auto v = v_blocks[b];
                for (std::size_t i = 0; i < p.size(); ++i) {
                    m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g[i];
                    v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
                    p[i] -= learning_rate * (m[i] / bias1) /
                            (std::sqrt(v[i] / bias2) + cfg.adam_eps);
                }
            }
        }
        result.train_loss.push_back(epoch_loss / static_cast<double>(seen));

        const double val_loss = evaluate_loss(params, corpus, val_idx);
        result.val_loss.push_back(val_loss);
        if (!std::isfinite(val_loss))
            throw TrainingFailure("validation loss diverged", epoch);

        if (val_loss < best_val) {
            best_val = val_loss;
            result.best_epoch = epoch;
            result.params = params;
            epochs_since_best = 0;
        } else {
            if (++epochs_since_best >= cfg.patience) break;
            if (epochs_since_best % cfg.lr_decay_patience == 0)
                learning_rate = std::max(learning_rate * cfg.lr_decay, cfg.min_learning_rate);
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Model container I/O

namespace {

constexpr char kMagic[8] = {'O', 'T', 'D', 'R', 'M', 'D', 'L', '1'};
constexpr std::uint32_t kFormatVersion = 1;

std::uint32_t crc32(const unsigned char* data, std::size_t len, std::uint32_t crc = 0) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t n = 0; n < 256; ++n) {
            std::uint32_t c = n;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[n] = c;
        }
        return t;
    }();
    crc = ~crc;
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
    return ~crc;
}

}  // namespace

void save_model(const ModelParams& params, const std::string& path,
                const std::string& provenance_json) {
    json header;
    header["input_width"] = params.arch.input_width;
    header["lstm_units"] = params.arch.lstm_units;
    header["tower_width"] = params.arch.tower_width;
    header["tower_depth"] = params.arch.tower_depth;
    header["aux_width"] = params.arch.aux_width;
    header["tasks"] = params.arch.tasks;
    header["feature_set"] = params.arch.feature_set;
    header["loss_weights"] = params.loss_weights;
    header["n_params"] = params.parameter_count();
    header["provenance"] = json::parse(provenance_json);
    const std::string header_str = header.dump();

    std::string buffer;
    buffer.append(kMagic, sizeof(kMagic));
    auto append_u32 = [&buffer](std::uint32_t v) {
        buffer.append(reinterpret_cast<const char*>(&v), sizeof(v));
    };
    append_u32(kFormatVersion);
    append_u32(static_cast<std::uint32_t>(header_str.size()));
    buffer += header_str;
    for (const auto& block : params.param_blocks())
        buffer.append(reinterpret_cast<const char*>(block.data()),
                      block.size() * sizeof(double));
    const std::uint32_t checksum =
        crc32(reinterpret_cast<const unsigned char*>(buffer.data()), buffer.size());

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open model file for writing: " + path);
    out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    out.write(reinterpret_cast<const char*>(&checksum), sizeof(checksum));
    if (!out) throw std::runtime_error("model write failed: " + path);
}

ModelParams load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open model file: " + path);
    std::string buffer((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buffer.size() < sizeof(kMagic) + 2 * sizeof(std::uint32_t) + sizeof(std::uint32_t))
        throw std::runtime_error("model file truncated: " + path);

    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, buffer.data() + buffer.size() - sizeof(stored_crc),
                sizeof(stored_crc));
    buffer.resize(buffer.size() - sizeof(stored_crc));
    if (crc32(reinterpret_cast<const unsigned char*>(buffer.data()), buffer.size()) !=
        stored_crc)
        throw std::runtime_error("model file checksum mismatch: " + path);

    std::size_t offset = 0;
    if (std::memcmp(buffer.data(), kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("not a model file: " + path);
    offset += sizeof(kMagic);
    auto read_u32 = [&buffer, &offset]() {
        std::uint32_t v;
        std::memcpy(&v, buffer.data() + offset, sizeof(v));
        offset += sizeof(v);
        return v;
    };
    if (read_u32() != kFormatVersion)
        throw std::runtime_error("unsupported model format version: " + path);
    const std::uint32_t header_len = read_u32();
    if (offset + header_len > buffer.size())
        throw std::runtime_error("model header truncated: " + path);
    const json header = json::parse(buffer.substr(offset, header_len));
    offset += header_len;

    ArchSpec arch;
    arch.input_width = header.at("input_width").get<int>();
    arch.lstm_units = header.at("lstm_units").get<int>();
    arch.tower_width = header.at("tower_width").get<int>();
    arch.tower_depth = header.at("tower_depth").get<int>();
    arch.aux_width = header.at("aux_width").get<int>();
    arch.tasks = header.at("tasks").get<std::array<bool, 3>>();
    arch.feature_set = header.at("feature_set").get<std::string>();

    ModelParams params = init_params(arch, header.at("loss_weights").get<std::array<double, 3>>(), 0);
    const auto n_params = header.at("n_params").get<std::size_t>();
    if (params.parameter_count() != n_params ||
        buffer.size() - offset != n_params * sizeof(double))
        throw std::runtime_error("model parameter block size mismatch: " + path);
    for (auto block : params.param_blocks()) {
        std::memcpy(block.data(), buffer.data() + offset, block.size() * sizeof(double));
        offset += block.size() * sizeof(double);
    }
    return params;
}

}  // namespace otdr::nn
