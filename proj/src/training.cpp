#include "lca/training.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "lca/constructions.hpp"
#include "lca/errors.hpp"

namespace lca {

namespace {

std::size_t idx(MatrixId id) { return static_cast<std::size_t>(id); }

}  // namespace

std::string_view to_string(ValueMatrixMode mode) {
    return mode == ValueMatrixMode::Train ? "train" : "identity_frozen";
}

std::string_view to_string(EmbeddingMode mode) { return mode == EmbeddingMode::Train ? "train" : "frozen_gaussian"; }

ValueMatrixMode parse_value_matrix_mode(std::string_view name) {
    if (name == "train") return ValueMatrixMode::Train;
    if (name == "identity_frozen") return ValueMatrixMode::IdentityFrozen;
    throw ConfigError("unknown value_matrix_mode '" + std::string(name) + "'");
}

EmbeddingMode parse_embedding_mode(std::string_view name) {
    if (name == "train") return EmbeddingMode::Train;
    if (name == "frozen_gaussian") return EmbeddingMode::FrozenGaussian;
    throw ConfigError("unknown embedding_mode '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
    if (d < 1) throw ConfigError("model.d must be >= 1");
    if (d_a < 0) throw ConfigError("model.d_a must be >= 0 (0 selects d)");
}

bool TrainConfig::is_frozen(MatrixId id) const {
    if (freeze[idx(id)]) return true;
    if (id == MatrixId::Value && value_matrix_mode == ValueMatrixMode::IdentityFrozen) return true;
    if (id == MatrixId::Embedding && embedding_mode == EmbeddingMode::FrozenGaussian) return true;
    return false;
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be non-negative");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("AdamW betas must lie in [0, 1)");
    if (!(eps_adam > 0.0)) throw ConfigError("train.eps_adam must be positive");
    if (steps < 0) throw ConfigError("train.steps must be >= 0");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (!(init_scale >= 0.0)) throw ConfigError("train.init_scale must be non-negative");
    if (eval_size < 1) throw ConfigError("train.eval_size must be >= 1");
    if (eval_every < 1) throw ConfigError("train.eval_every must be >= 1");
    if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
    if (select_lr && lr_grid.empty()) throw ConfigError("train.lr_grid must be non-empty when select_lr is set");
    for (double x : lr_grid) {
        if (!(x > 0.0)) throw ConfigError("train.lr_grid entries must be positive");
    }
}

AdamState AdamState::zeros_like(const ModelParams& p) {
    AdamState s;
    for (auto id : kAllMatrices) {
        const auto& w = p.get(id);
        s.first[idx(id)] = Matrix::Zero(w.rows(), w.cols());
        s.second[idx(id)] = Matrix::Zero(w.rows(), w.cols());
    }
    return s;
}

Pcg32 stream_rng(std::uint64_t seed, Stream s) { return Pcg32::derive(seed, static_cast<std::uint64_t>(s)); }

ModelParams init_params(const TaskConfig& task, const ModelConfig& model, const TrainConfig& train, Pcg32& rng) {
    task.validate();
    model.validate();
    train.validate();
    const int d = model.d;
    const int d_a = model.resolved_d_a();
    ModelParams p;
    p.m = task.m;
    p.W_E = gaussian_matrix(d, task.vocab(), train.init_scale, rng);
    p.W_K = gaussian_matrix(d_a, d, train.init_scale, rng);
    p.W_Q = gaussian_matrix(d_a, d, train.init_scale, rng);
    p.W_V = gaussian_matrix(d, d, train.init_scale, rng);
    if (train.value_matrix_mode == ValueMatrixMode::IdentityFrozen) p.W_V = Matrix::Identity(d, d);
    return p;
}

void adamw_step(ModelParams& params, const Gradients& grads, AdamState& state, const TrainConfig& cfg) {
    for (auto id : kAllMatrices) {
        if (cfg.is_frozen(id)) continue;
        if (!grads.get(id).allFinite()) {
            throw NumericError("non-finite gradient in " + std::string(to_string(id)) + " at optimizer step " +
                               std::to_string(state.step + 1));
        }
        if (grads.get(id).rows() != params.get(id).rows() || grads.get(id).cols() != params.get(id).cols()) {
            throw InvalidInput("gradient shape mismatch for " + std::string(to_string(id)));
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto id : kAllMatrices) {
        if (cfg.is_frozen(id)) continue;
        auto& w = params.get(id);
        const auto& g = grads.get(id);
        auto& m1 = state.first[idx(id)];
        auto& m2 = state.second[idx(id)];
        m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * g;
        m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        w *= 1.0 - cfg.lr * cfg.weight_decay;
        w.array() -= cfg.lr * (m1.array() / bc1) / ((m2.array() / bc2).sqrt() + cfg.eps_adam);
    }
}

std::vector<Sample> draw_samples(const TaskSampler& sampler, int n, Pcg32& rng) {
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out.push_back(sampler.sample(rng));
    return out;
}

double accuracy_on(const ModelParams& params, std::span<const Sample> samples) {
    if (samples.empty()) throw InvalidInput("accuracy over an empty sample set");
    const TokenTables tables(params);
    std::size_t hits = 0;
    for (const auto& s : samples) hits += tables.predict(s.context) == s.target ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(samples.size());
}

double evaluate(const ModelParams& params, const TaskConfig& task, int n, Pcg32& rng) {
    if (n < 1) throw InvalidInput("evaluate needs n >= 1");
    const TaskSampler sampler(task);
    const TokenTables tables(params);
    std::size_t hits = 0;
    for (int i = 0; i < n; ++i) {
        const Sample s = sampler.sample(rng);
        hits += tables.predict(s.context) == s.target ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

TrainReport train(const TaskConfig& task, const ModelConfig& model, const TrainConfig& cfg, std::uint64_t seed,
                  const CheckpointHook& hook) {
    const auto start = std::chrono::steady_clock::now();
    task.validate();
    model.validate();
    cfg.validate();

    Pcg32 init_rng = stream_rng(seed, Stream::Init);
    Pcg32 eval_rng = stream_rng(seed, Stream::EvalData);

    TrainReport report;
    report.lr = cfg.lr;
    report.params = init_params(task, model, cfg, init_rng);
    report.optimizer = AdamState::zeros_like(report.params);
    report.sample_rng = stream_rng(seed, Stream::TrainData);

    const TaskSampler sampler(task);
    const std::vector<Sample> eval_set = draw_samples(sampler, cfg.eval_size, eval_rng);

    std::vector<Sample> batch(static_cast<std::size_t>(cfg.batch_size));
    double interval_loss = 0.0;
    int interval_steps = 0;
    report.step_losses.reserve(static_cast<std::size_t>(cfg.steps));

    for (int step = 1; step <= cfg.steps; ++step) {
        for (auto& s : batch) s = sampler.sample(report.sample_rng);
        const BatchResult br = batch_backward(report.params, batch);
        if (!std::isfinite(br.mean_loss)) throw NumericError("non-finite training loss at step " + std::to_string(step));
        adamw_step(report.params, br.grads, report.optimizer, cfg);
        report.step_losses.push_back(br.mean_loss);
        interval_loss += br.mean_loss;
        ++interval_steps;

        if (step % cfg.eval_every == 0 || step == cfg.steps) {
            report.records.push_back({step, interval_loss / interval_steps, accuracy_on(report.params, eval_set)});
            interval_loss = 0.0;
            interval_steps = 0;
        }
        if (hook && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
            hook(step, report.params, report.optimizer, report.sample_rng);
        }
    }
    report.final_accuracy = report.records.empty() ? accuracy_on(report.params, eval_set) : report.records.back().eval_accuracy;
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

TrainReport train_select_lr(const TaskConfig& task, const ModelConfig& model, const TrainConfig& cfg, std::uint64_t seed,
                            const CheckpointHook& hook) {
    cfg.validate();
    if (cfg.lr_grid.empty()) throw ConfigError("train.lr_grid is empty");
    TrainReport best;
    bool have = false;
    for (double lr : cfg.lr_grid) {
        TrainConfig c = cfg;
        c.lr = lr;
        TrainReport r = train(task, model, c, seed, hook);
        if (!have || r.final_accuracy > best.final_accuracy) {
            best = std::move(r);
            have = true;
        }
    }
    return best;
}

}  // namespace lca
