#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "otdr/dataset.hpp"

namespace otdr::nn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Task indices throughout the module.
inline constexpr int kTaskDetection = 0;
inline constexpr int kTaskPosition = 1;
inline constexpr int kTaskReflectance = 2;

struct ArchSpec {
    int input_width = 1;    // per-timestep input width
    int lstm_units = 30;    // shared encoder size
    int tower_width = 15;   // task-specific hidden layer size
    int tower_depth = 1;    // stacked hidden layers per tower
    int aux_width = 0;      // setup features concatenated after the encoder
    std::array<bool, 3> tasks = {true, true, true};
    std::string feature_set = "base";

    int encoder_output() const { return lstm_units + aux_width; }
    int active_tasks() const;
    void validate() const;
    bool operator==(const ArchSpec&) const = default;
};

/// Gate order: forget, input, candidate, output.
struct LstmParams {
    std::array<MatrixXd, 4> input_weights;      // lstm_units x input_width
    std::array<MatrixXd, 4> recurrent_weights;  // lstm_units x lstm_units
    std::array<VectorXd, 4> biases;             // lstm_units
};

struct TowerParams {
    std::vector<MatrixXd> hidden_weights;
    std::vector<VectorXd> hidden_biases;
    VectorXd head_weights;
    double head_bias = 0.0;
};

struct ModelParams {
    ArchSpec arch;
    LstmParams lstm;
    std::array<TowerParams, 3> towers;  // towers[k] populated iff arch.tasks[k]
    std::array<double, 3> loss_weights = {0.5, 0.3, 0.2};  // alpha, beta, delta

    /// Stable-order mutable views over every coefficient; also the
    /// serialization and optimizer ordering.
    std::vector<std::span<double>> param_blocks();
    std::vector<std::span<const double>> param_blocks() const;
    std::size_t parameter_count() const;
};

/// Glorot-uniform weights, zero biases except forget-gate bias = 1.
ModelParams init_params(const ArchSpec& arch, std::array<double, 3> loss_weights,
                        std::uint64_t seed);

/// Same shapes as `like`, all coefficients zero.
ModelParams zeros_like(const ModelParams& like);

/// One LSTM step; canonical update c_t = f*c_prev + i*g, h_t = o*tanh(c_t).
void lstm_cell_forward(const VectorXd& x_t, const VectorXd& h_prev, const VectorXd& c_prev,
                       const LstmParams& params, VectorXd& h_t, VectorXd& c_t);

/// Iterated cell application from zero state; returns the final hidden state.
VectorXd lstm_sequence_forward(const MatrixXd& sequence, const LstmParams& params);

struct Prediction {
    double p_event = 0.5;       // valid iff detection task active
    double position = 0.0;      // normalized, iff position task active
    double reflectance = 0.0;   // normalized, iff reflectance task active
};

Prediction model_forward(const data::WindowSample& window, const ModelParams& params);

/// Column-batched training data; row b is sample b.
struct Batch {
    MatrixXd features;     // B x window_len
    MatrixXd aux;          // B x aux_width
    VectorXd id_class;     // B, in {0,1}
    VectorXd position;     // B
    VectorXd reflectance;  // B
    Eigen::Index size() const { return features.rows(); }
};

Batch make_batch(const data::Corpus& corpus, std::span<const std::size_t> indices);

/// Per-task head outputs; vectors empty for inactive tasks.
struct BatchOutput {
    VectorXd p_event;
    VectorXd position;
    VectorXd reflectance;
};

BatchOutput batch_forward(const Batch& batch, const ModelParams& params);

/// alpha*BCE + beta*masked-MSE(position) + delta*masked-MSE(reflectance).
/// Regression terms average over positive samples only (zero if none);
/// inactive tasks (empty prediction vectors) contribute nothing.
double multitask_loss(const BatchOutput& pred, const Batch& target,
                      std::array<double, 3> weights);

/// Exact reverse-mode gradient of multitask_loss through the towers and the
/// unrolled LSTM. `grad` must be zeros_like(params); returns the loss.
double backprop_gradients(const Batch& batch, const ModelParams& params, ModelParams& grad);

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 64;
    int max_epochs = 300;
    int patience = 20;
    double lr_decay = 1.0;       // < 1 shrinks the step after lr_decay_patience
    int lr_decay_patience = 8;   // epochs without a validation improvement
    double min_learning_rate = 1e-5;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainResult {
    ModelParams params;  // best-validation-loss epoch
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    int best_epoch = -1;
};

struct TrainingFailure : std::runtime_error {
    int epoch;
    explicit TrainingFailure(const std::string& what, int epoch_index)
        : std::runtime_error(what), epoch(epoch_index) {}
};

/// Mini-batch Adam with early stopping on validation loss; deterministic
/// for a fixed seed.
TrainResult train_model(const data::Corpus& corpus, const ArchSpec& arch,
                        std::array<double, 3> loss_weights, const TrainConfig& cfg);

struct WeightCounts {
    long w_lstm_formula = 0;            // 4n_c^2 + 4n_inp*n_c + n_c*n_out + 3n_c
    long w_task_formula = 0;            // j * (n_out + n_task_out), per task
    long total_formula = 0;             // lstm + one task term per active task
    long enumerated = 0;                // exact parameter count of this implementation
};

WeightCounts count_weights(const ArchSpec& arch);

/// Self-describing binary container (magic, version, JSON header, f64 LE
/// parameter block, CRC32 trailer); round-trips bit-exactly.
void save_model(const ModelParams& params, const std::string& path,
                const std::string& provenance_json = "{}");
ModelParams load_model(const std::string& path);

/// Batched inference over selected corpus samples.
BatchOutput predict_corpus(const ModelParams& params, const data::Corpus& corpus,
                           std::span<const std::size_t> indices);

/// Indices of samples carrying the given split tag (-1: all).
std::vector<std::size_t> split_indices(const data::Corpus& corpus, int split);

}  // namespace otdr::nn
