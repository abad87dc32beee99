#include "otdr/nn.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace otdr::nn {

namespace {

constexpr double kBceEps = 1e-7;

inline MatrixXd sigmoid(const MatrixXd& x) {
    return (1.0 / (1.0 + (-x.array()).exp())).matrix();
}

/// Per-step state recorded during the batched forward pass for BPTT.
struct LstmCache {
    std::vector<MatrixXd> gate_f, gate_i, gate_g, gate_o;
    std::vector<MatrixXd> cell, hidden;  // post-update C_t and H_t
};

struct TowerCache {
    std::vector<MatrixXd> hidden;  // per depth layer, B x tower_width
};

struct ForwardCache {
    LstmCache lstm;
    MatrixXd encoder;  // B x encoder_output (final hidden state + aux)
    std::array<TowerCache, 3> towers;
};

MatrixXd lstm_batch_forward(const Batch& batch, const ModelParams& params,
                            LstmCache* cache) {
    const auto B = batch.size();
    const auto L = batch.features.cols();
    const int n_c = params.arch.lstm_units;
    if (params.arch.input_width != 1)
        throw std::invalid_argument("batched forward supports input_width == 1 only");
    if (L < 1) throw std::invalid_argument("empty sequence");

    MatrixXd h = MatrixXd::Zero(B, n_c);
    MatrixXd c = MatrixXd::Zero(B, n_c);
    if (cache) {
        for (auto* v : {&cache->gate_f, &cache->gate_i, &cache->gate_g, &cache->gate_o,
                        &cache->cell, &cache->hidden})
            v->reserve(static_cast<std::size_t>(L));
    }
    const auto& lstm = params.lstm;
    for (Eigen::Index t = 0; t < L; ++t) {
        const auto x_t = batch.features.col(t);
        auto preact = [&](int g) -> MatrixXd {
            MatrixXd pre = x_t * lstm.input_weights[g].transpose();
            pre.noalias() += h * lstm.recurrent_weights[g].transpose();
            pre.rowwise() += lstm.biases[g].transpose();
            return pre;
        };
        MatrixXd f = sigmoid(preact(0));
        MatrixXd i = sigmoid(preact(1));
        MatrixXd g = preact(2).array().tanh().matrix();
        MatrixXd o = sigmoid(preact(3));
        c = (f.array() * c.array() + i.array() * g.array()).matrix();
        h = (o.array() * c.array().tanh()).matrix();
        if (cache) {
            cache->gate_f.push_back(std::move(f));
            cache->gate_i.push_back(std::move(i));
            cache->gate_g.push_back(std::move(g));
            cache->gate_o.push_back(std::move(o));
            cache->cell.push_back(c);
            cache->hidden.push_back(h);
        }
    }
    // Last-state readout: h after the final step summarizes the window.
    return h;
}

VectorXd tower_forward(const MatrixXd& encoder, const TowerParams& tower, TowerCache* cache) {
    MatrixXd a = encoder;
    for (std::size_t layer = 0; layer < tower.hidden_weights.size(); ++layer) {
        MatrixXd pre = a * tower.hidden_weights[layer].transpose();
        pre.rowwise() += tower.hidden_biases[layer].transpose();
        a = pre.array().tanh().matrix();
        if (cache) cache->hidden.push_back(a);
    }
    return (a * tower.head_weights).array() + tower.head_bias;
}

BatchOutput forward_impl(const Batch& batch, const ModelParams& params, ForwardCache* cache) {
    const MatrixXd h_pooled =
        lstm_batch_forward(batch, params, cache ? &cache->lstm : nullptr);

    if (batch.aux.cols() != params.arch.aux_width)
        throw std::invalid_argument("aux feature arity does not match the model");
    MatrixXd encoder(h_pooled.rows(), params.arch.encoder_output());
    encoder.leftCols(params.arch.lstm_units) = h_pooled;
    if (params.arch.aux_width > 0) encoder.rightCols(params.arch.aux_width) = batch.aux;
    if (cache) cache->encoder = encoder;

    BatchOutput out;
    if (params.arch.tasks[kTaskDetection]) {
        VectorXd logits = tower_forward(encoder, params.towers[kTaskDetection],
                                        cache ? &cache->towers[kTaskDetection] : nullptr);
        out.p_event = sigmoid(logits);
    }
    if (params.arch.tasks[kTaskPosition])
        out.position = tower_forward(encoder, params.towers[kTaskPosition],
                                     cache ? &cache->towers[kTaskPosition] : nullptr);
    if (params.arch.tasks[kTaskReflectance])
        out.reflectance = tower_forward(encoder, params.towers[kTaskReflectance],
                                        cache ? &cache->towers[kTaskReflectance] : nullptr);
    return out;
}

/// Backward through one tower; returns d(loss)/d(encoder).
MatrixXd tower_backward(const VectorXd& d_head, const MatrixXd& encoder,
                        const TowerParams& tower, const TowerCache& cache,
                        TowerParams& grad) {
    const auto depth = tower.hidden_weights.size();
    const MatrixXd& last = cache.hidden.back();
    grad.head_weights += last.transpose() * d_head;
    grad.head_bias += d_head.sum();

    MatrixXd d_act = d_head * tower.head_weights.transpose();  // B x j
    for (std::size_t layer = depth; layer-- > 0;) {
        const MatrixXd& act = cache.hidden[layer];
        const MatrixXd d_pre =
            (d_act.array() * (1.0 - act.array().square())).matrix();
        const MatrixXd& input = layer == 0 ? encoder : cache.hidden[layer - 1];
        grad.hidden_weights[layer].noalias() += d_pre.transpose() * input;
        grad.hidden_biases[layer] += d_pre.colwise().sum().transpose();
        d_act = d_pre * tower.hidden_weights[layer];
    }
    return d_act;  // now B x encoder width
}

}  // namespace

int ArchSpec::active_tasks() const {
    return (tasks[0] ? 1 : 0) + (tasks[1] ? 1 : 0) + (tasks[2] ? 1 : 0);
}

void ArchSpec::validate() const {
    if (input_width < 1 || lstm_units < 1 || tower_width < 1 || tower_depth < 1 ||
        aux_width < 0)
        throw std::invalid_argument("architecture dimensions must be positive");
    if (active_tasks() < 1) throw std::invalid_argument("at least one task must be active");
}

std::vector<std::span<double>> ModelParams::param_blocks() {
    std::vector<std::span<double>> blocks;
    for (int g = 0; g < 4; ++g) {
        blocks.emplace_back(lstm.input_weights[g].data(),
                            static_cast<std::size_t>(lstm.input_weights[g].size()));
        blocks.emplace_back(lstm.recurrent_weights[g].data(),
                            static_cast<std::size_t>(lstm.recurrent_weights[g].size()));
        blocks.emplace_back(lstm.biases[g].data(),
                            static_cast<std::size_t>(lstm.biases[g].size()));
    }
    for (int k = 0; k < 3; ++k) {
        if (!arch.tasks[k]) continue;
        auto& tower = towers[k];
        for (std::size_t layer = 0; layer < tower.hidden_weights.size(); ++layer) {
            blocks.emplace_back(tower.hidden_weights[layer].data(),
                                static_cast<std::size_t>(tower.hidden_weights[layer].size()));
            blocks.emplace_back(tower.hidden_biases[layer].data(),
                                static_cast<std::size_t>(tower.hidden_biases[layer].size()));
        }
        blocks.emplace_back(tower.head_weights.data(),
                            static_cast<std::size_t>(tower.head_weights.size()));
        blocks.emplace_back(&tower.head_bias, 1);
    }
    return blocks;
}

std::vector<std::span<const double>> ModelParams::param_blocks() const {
    auto mutable_blocks = const_cast<ModelParams*>(this)->param_blocks();
    return {mutable_blocks.begin(), mutable_blocks.end()};
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& block : param_blocks()) n += block.size();
    return n;
}

ModelParams init_params(const ArchSpec& arch, std::array<double, 3> loss_weights,
                        std::uint64_t seed) {
    arch.validate();
    ModelParams params;
    params.arch = arch;
    params.loss_weights = loss_weights;

    const int n_c = arch.lstm_units;
    for (int g = 0; g < 4; ++g) {
        params.lstm.input_weights[g] = MatrixXd::Zero(n_c, arch.input_width);
        params.lstm.recurrent_weights[g] = MatrixXd::Zero(n_c, n_c);
        params.lstm.biases[g] = VectorXd::Zero(n_c);
    }
    for (int k = 0; k < 3; ++k) {
        if (!arch.tasks[k]) continue;
        auto& tower = params.towers[k];
        int fan_in = arch.encoder_output();
        for (int layer = 0; layer < arch.tower_depth; ++layer) {
            tower.hidden_weights.push_back(MatrixXd::Zero(arch.tower_width, fan_in));
            tower.hidden_biases.push_back(VectorXd::Zero(arch.tower_width));
            fan_in = arch.tower_width;
        }
        tower.head_weights = VectorXd::Zero(arch.tower_width);
        tower.head_bias = 0.0;
    }

    std::mt19937_64 rng(seed);
    auto glorot = [&rng](MatrixXd& m, Eigen::Index fan_in, Eigen::Index fan_out) {
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    };
    for (int g = 0; g < 4; ++g) {
        glorot(params.lstm.input_weights[g], arch.input_width, n_c);
        glorot(params.lstm.recurrent_weights[g], n_c, n_c);
    }
    params.lstm.biases[0].setOnes();  // forget gate open at init
    for (int k = 0; k < 3; ++k) {
        if (!arch.tasks[k]) continue;
        auto& tower = params.towers[k];
        for (auto& w : tower.hidden_weights) glorot(w, w.cols(), w.rows());
        MatrixXd head(1, arch.tower_width);
        glorot(head, arch.tower_width, 1);
        tower.head_weights = head.transpose();
    }
    return params;
}

ModelParams zeros_like(const ModelParams& like) {
    ModelParams z = like;
    for (auto block : z.param_blocks())
        for (double& x : block) x = 0.0;
    return z;
}

void lstm_cell_forward(const VectorXd& x_t, const VectorXd& h_prev, const VectorXd& c_prev,
                       const LstmParams& params, VectorXd& h_t, VectorXd& c_t) {
    const auto n_c = params.biases[0].size();
    if (h_prev.size() != n_c || c_prev.size() != n_c ||
        x_t.size() != params.input_weights[0].cols())
        throw std::invalid_argument("lstm cell shape mismatch");
    auto preact = [&](int g) -> VectorXd {
        return params.input_weights[g] * x_t + params.recurrent_weights[g] * h_prev +
               params.biases[g];
    };
    const VectorXd f = (1.0 / (1.0 + (-preact(0).array()).exp())).matrix();
    const VectorXd i = (1.0 / (1.0 + (-preact(1).array()).exp())).matrix();
    const VectorXd g = preact(2).array().tanh().matrix();
    const VectorXd o = (1.0 / (1.0 + (-preact(3).array()).exp())).matrix();
    c_t = (f.array() * c_prev.array() + i.array() * g.array()).matrix();
    h_t = (o.array() * c_t.array().tanh()).matrix();
}

VectorXd lstm_sequence_forward(const MatrixXd& sequence, const LstmParams& params) {
    if (sequence.rows() < 1) throw std::invalid_argument("empty sequence");
    const auto n_c = params.biases[0].size();
    VectorXd h = VectorXd::Zero(n_c);
    VectorXd c = VectorXd::Zero(n_c);
    VectorXd h_next(n_c), c_next(n_c);
    for (Eigen::Index t = 0; t < sequence.rows(); ++t) {
        lstm_cell_forward(sequence.row(t).transpose(), h, c, params, h_next, c_next);
        h.swap(h_next);
        c.swap(c_next);
    }
    return h;
}

Prediction model_forward(const data::WindowSample& window, const ModelParams& params) {
    if (static_cast<int>(window.aux.size()) != params.arch.aux_width)
        throw std::invalid_argument("window aux arity does not match the model");
    Batch batch;
    batch.features = Eigen::Map<const Eigen::RowVectorXd>(
        window.features.data(), static_cast<Eigen::Index>(window.features.size()));
    batch.aux = Eigen::Map<const Eigen::RowVectorXd>(
        window.aux.data(), static_cast<Eigen::Index>(window.aux.size()));
    const BatchOutput out = batch_forward(batch, params);

    Prediction pred;
    if (out.p_event.size()) pred.p_event = out.p_event[0];
    if (out.position.size()) pred.position = out.position[0];
    if (out.reflectance.size()) pred.reflectance = out.reflectance[0];
    return pred;
}

Batch make_batch(const data::Corpus& corpus, std::span<const std::size_t> indices) {
    const auto B = static_cast<Eigen::Index>(indices.size());
    const int L = corpus.window_len;
    const int n_aux = corpus.feature_set.size();
    Batch batch;
    batch.features.resize(B, L);
    batch.aux.resize(B, n_aux);
    batch.id_class.resize(B);
    batch.position.resize(B);
    batch.reflectance.resize(B);
    for (Eigen::Index b = 0; b < B; ++b) {
        const auto& s = corpus.samples[indices[static_cast<std::size_t>(b)]];
        for (int t = 0; t < L; ++t) batch.features(b, t) = s.features[static_cast<std::size_t>(t)];
        for (int a = 0; a < n_aux; ++a) batch.aux(b, a) = s.aux[static_cast<std::size_t>(a)];
        batch.id_class[b] = s.id_class;
        batch.position[b] = s.position_target;
        batch.reflectance[b] = s.reflectance_target;
    }
    return batch;
}

BatchOutput batch_forward(const Batch& batch, const ModelParams& params) {
    return forward_impl(batch, params, nullptr);
}

double multitask_loss(const BatchOutput& pred, const Batch& target,
                      std::array<double, 3> weights) {
    const auto B = target.size();
    if (B < 1) throw std::invalid_argument("empty batch");
    double loss = 0.0;

    if (pred.p_event.size()) {
        const auto p = pred.p_event.array().min(1.0 - kBceEps).max(kBceEps);
        const auto y = target.id_class.array();
        loss += weights[0] *
                (-(y * p.log() + (1.0 - y) * (1.0 - p).log())).mean();
    }
    const auto mask = target.id_class.array();
    const double n_pos = mask.sum();
    if (n_pos > 0.0) {
        if (pred.position.size()) {
            const auto err = (pred.position.array() - target.position.array()) * mask;
            loss += weights[1] * err.square().sum() / n_pos;
        }
        if (pred.reflectance.size()) {
            const auto err = (pred.reflectance.array() - target.reflectance.array()) * mask;
            loss += weights[2] * err.square().sum() / n_pos;
        }
    }
    return loss;
}

double backprop_gradients(const Batch& batch, const ModelParams& params, ModelParams& grad) {
    const auto B = batch.size();
    if (B < 1) throw std::invalid_argument("empty batch");
    const auto& arch = params.arch;
    const auto [alpha, beta, delta] = params.loss_weights;

    ForwardCache cache;
    const BatchOutput out = forward_impl(batch, params, &cache);
    if (!cache.encoder.allFinite())
        throw std::runtime_error("numeric overflow in lstm encoder activations");
    const double loss = multitask_loss(out, batch, params.loss_weights);

    const auto mask = batch.id_class.array();
    const double n_pos = mask.sum();

    // Head gradients.
    MatrixXd d_encoder = MatrixXd::Zero(B, arch.encoder_output());
    if (arch.tasks[kTaskDetection]) {
        // d(BCE o sigmoid)/d(logit) = (p - y) / B
        const VectorXd d_head =
            alpha * (out.p_event - batch.id_class) / static_cast<double>(B);
        d_encoder += tower_backward(d_head, cache.encoder, params.towers[kTaskDetection],
                                    cache.towers[kTaskDetection], grad.towers[kTaskDetection]);
    }
    if (arch.tasks[kTaskPosition] && n_pos > 0.0) {
        const VectorXd d_head =
            (beta * 2.0 / n_pos) *
            ((out.position.array() - batch.position.array()) * mask).matrix();
        d_encoder += tower_backward(d_head, cache.encoder, params.towers[kTaskPosition],
                                    cache.towers[kTaskPosition], grad.towers[kTaskPosition]);
    }
    if (arch.tasks[kTaskReflectance] && n_pos > 0.0) {
        const VectorXd d_head =
            (delta * 2.0 / n_pos) *
            ((out.reflectance.array() - batch.reflectance.array()) * mask).matrix();
        d_encoder +=
            tower_backward(d_head, cache.encoder, params.towers[kTaskReflectance],
                           cache.towers[kTaskReflectance], grad.towers[kTaskReflectance]);
    }

    // BPTT through the unrolled LSTM. Only the final hidden state reaches
    // the towers, so the encoder gradient seeds the last step and flows
    // backwards from there (aux columns have no upstream parameters).
    const auto L = batch.features.cols();
    const int n_c = arch.lstm_units;
    MatrixXd d_h = d_encoder.leftCols(n_c);
    MatrixXd d_c = MatrixXd::Zero(B, n_c);
    const auto& lstm = params.lstm;
    for (Eigen::Index t = L - 1; t >= 0; --t) {
        const MatrixXd& f = cache.lstm.gate_f[static_cast<std::size_t>(t)];
        const MatrixXd& i = cache.lstm.gate_i[static_cast<std::size_t>(t)];
        const MatrixXd& g = cache.lstm.gate_g[static_cast<std::size_t>(t)];
        const MatrixXd& o = cache.lstm.gate_o[static_cast<std::size_t>(t)];
        const MatrixXd& c = cache.lstm.cell[static_cast<std::size_t>(t)];
        const MatrixXd tanh_c = c.array().tanh().matrix();

        const MatrixXd d_o = (d_h.array() * tanh_c.array()).matrix();
        d_c += (d_h.array() * o.array() * (1.0 - tanh_c.array().square())).matrix();

        MatrixXd c_prev;
        if (t > 0)
            c_prev = cache.lstm.cell[static_cast<std::size_t>(t - 1)];
        else
            c_prev = MatrixXd::Zero(B, n_c);

        const MatrixXd d_f = (d_c.array() * c_prev.array()).matrix();
        const MatrixXd d_i = (d_c.array() * g.array()).matrix();
        const MatrixXd d_g = (d_c.array() * i.array()).matrix();

        const std::array<MatrixXd, 4> d_pre = {
            (d_f.array() * f.array() * (1.0 - f.array())).matrix(),
            (d_i.array() * i.array() * (1.0 - i.array())).matrix(),
            (d_g.array() * (1.0 - g.array().square())).matrix(),
            (d_o.array() * o.array() * (1.0 - o.array())).matrix()};

        const auto x_t = batch.features.col(t);
        MatrixXd h_prev;
        if (t > 0)
            h_prev = cache.lstm.hidden[static_cast<std::size_t>(t - 1)];
        else
            h_prev = MatrixXd::Zero(B, n_c);

        MatrixXd d_h_prev = MatrixXd::Zero(B, n_c);
        for (int gate = 0; gate < 4; ++gate) {
            grad.lstm.input_weights[gate].noalias() += d_pre[gate].transpose() * x_t;
            grad.lstm.recurrent_weights[gate].noalias() += d_pre[gate].transpose() * h_prev;
            grad.lstm.biases[gate] += d_pre[gate].colwise().sum().transpose();
            d_h_prev.noalias() += d_pre[gate] * lstm.recurrent_weights[gate];
        }
        d_h = std::move(d_h_prev);
        d_c = (d_c.array() * f.array()).matrix();
    }
    return loss;
}

WeightCounts count_weights(const ArchSpec& arch) {
    arch.validate();
    WeightCounts counts;
    const long n_c = arch.lstm_units;
    const long n_inp = arch.input_width;
    const long n_out = n_c;  // the last-state readout emits n_c values
    counts.w_lstm_formula = 4 * n_c * n_c + 4 * n_inp * n_c + n_c * n_out + 3 * n_c;
    counts.w_task_formula = static_cast<long>(arch.tower_width) * (n_out + 1);
    counts.total_formula =
        counts.w_lstm_formula + arch.active_tasks() * counts.w_task_formula;

    const ModelParams probe = init_params(arch, {0.5, 0.3, 0.2}, 0);
    counts.enumerated = static_cast<long>(probe.parameter_count());
    return counts;
}

}  // namespace otdr::nn
