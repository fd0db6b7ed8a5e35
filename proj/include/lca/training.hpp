#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lca/model.hpp"

namespace lca {

enum class ValueMatrixMode { Train, IdentityFrozen };
enum class EmbeddingMode { Train, FrozenGaussian };

std::string_view to_string(ValueMatrixMode mode);
std::string_view to_string(EmbeddingMode mode);
ValueMatrixMode parse_value_matrix_mode(std::string_view name);
EmbeddingMode parse_embedding_mode(std::string_view name);

struct ModelConfig {
    int d = 256;
    int d_a = 0;  // 0 means d_a = d

    int resolved_d_a() const { return d_a > 0 ? d_a : d; }
    void validate() const;
};

struct TrainConfig {
    double lr = 0.001;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;
    int steps = 10000;
    int batch_size = 256;
    std::array<bool, 4> freeze{};  // indexed by MatrixId
    double init_scale = 0.02;
    ValueMatrixMode value_matrix_mode = ValueMatrixMode::Train;
    EmbeddingMode embedding_mode = EmbeddingMode::Train;
    int eval_size = 1024;
    int eval_every = 500;
    std::vector<double> lr_grid{0.01, 0.001};
    bool select_lr = false;
    int checkpoint_every = 0;  // 0 disables the checkpoint hook

    /// Explicitly frozen, or frozen by a value/embedding mode.
    bool is_frozen(MatrixId id) const;
    void validate() const;
};

struct AdamState {
    std::array<Matrix, 4> first;   // indexed by MatrixId
    std::array<Matrix, 4> second;
    std::int64_t step = 0;

    static AdamState zeros_like(const ModelParams& p);
};

struct TrainRecord {
    int step = 0;
    double train_loss = 0.0;  // mean batch loss since the previous record
    double eval_accuracy = 0.0;
};

struct TrainReport {
    std::vector<TrainRecord> records;
    std::vector<double> step_losses;
    ModelParams params;
    AdamState optimizer;
    Pcg32 sample_rng;
    double lr = 0.0;
    double final_accuracy = 0.0;
    double wall_seconds = 0.0;
};

/// Gaussian N(0, init_scale^2) for every matrix (W_E, W_K, W_Q, W_V drawn in
/// that order); W_V is the identity under ValueMatrixMode::IdentityFrozen.
ModelParams init_params(const TaskConfig& task, const ModelConfig& model, const TrainConfig& train, Pcg32& rng);

/// One bias-corrected AdamW update with decoupled weight decay, skipping
/// frozen matrices. Throws NumericError on a non-finite gradient.
void adamw_step(ModelParams& params, const Gradients& grads, AdamState& state, const TrainConfig& cfg);

std::vector<Sample> draw_samples(const TaskSampler& sampler, int n, Pcg32& rng);

/// Fraction of samples with predict == target.
double accuracy_on(const ModelParams& params, std::span<const Sample> samples);
/// Accuracy on n fresh samples drawn from rng.
double evaluate(const ModelParams& params, const TaskConfig& task, int n, Pcg32& rng);

using CheckpointHook = std::function<void(int step, const ModelParams&, const AdamState&, const Pcg32&)>;

/// Online training: every step draws batch_size fresh samples. The random
/// streams for init, training data and the fixed eval set are derived from seed.
TrainReport train(const TaskConfig& task, const ModelConfig& model, const TrainConfig& cfg, std::uint64_t seed,
                  const CheckpointHook& hook = {});

/// Runs train() once per lr in cfg.lr_grid and keeps the best final eval
/// accuracy (earliest grid entry on ties).
TrainReport train_select_lr(const TaskConfig& task, const ModelConfig& model, const TrainConfig& cfg, std::uint64_t seed,
                            const CheckpointHook& hook = {});

/// Stream identifiers used with Pcg32::derive.
enum class Stream : std::uint64_t { Init = 1, TrainData = 2, EvalData = 3, Analysis = 4, Control = 5 };
Pcg32 stream_rng(std::uint64_t seed, Stream s);

}  // namespace lca
