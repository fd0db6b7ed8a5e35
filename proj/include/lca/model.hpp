#pragma once

#include <array>
#include <span>
#include <string_view>

#include <Eigen/Dense>

#include "lca/latent_task.hpp"

namespace lca {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class MatrixId { Embedding, Key, Query, Value };
inline constexpr std::array kAllMatrices{MatrixId::Embedding, MatrixId::Key, MatrixId::Query, MatrixId::Value};

std::string_view to_string(MatrixId id);
MatrixId parse_matrix_id(std::string_view name);

/// One-layer, single-head transformer with tied embeddings, no residual or norm:
///   f(x) = [W_E^T W_V attn(W_E chi(x))]_{:L}
struct ModelParams {
    int m = 0;
    Matrix W_E;  // d x V, column t embeds token t
    Matrix W_K;  // d_a x d
    Matrix W_Q;  // d_a x d
    Matrix W_V;  // d x d

    int d() const { return static_cast<int>(W_E.rows()); }
    int d_a() const { return static_cast<int>(W_K.rows()); }
    std::uint32_t vocab() const { return 1u << m; }

    Matrix& get(MatrixId id);
    const Matrix& get(MatrixId id) const;

    /// Throws InvalidInput when shapes disagree or an entry is non-finite.
    void validate() const;

    static ModelParams zeros(int m, int d, int d_a);
};

struct ForwardTrace {
    Vector scores;             // u_{t_l, t_L} per position
    Vector attention_weights;  // softmax(scores)
    Vector hidden;             // h(x) = sum_l p_l W_E(t_l)
    Vector logits;             // W_E^T W_V h(x)
};

struct Gradients {
    Matrix W_E, W_K, W_Q, W_V;

    static Gradients zeros_like(const ModelParams& p);
    Matrix& get(MatrixId id);
    const Matrix& get(MatrixId id) const;
    Gradients& operator+=(const Gradients& o);
    Gradients& operator*=(double s);
    bool all_finite() const;
};

Vector softmax(const Vector& x);
/// -log softmax(logits)[target], via max-subtracted log-sum-exp.
double cross_entropy(const Vector& logits, Token target);
/// Lowest index among maximal entries.
Token argmax_lowest(const Vector& logits);

ForwardTrace forward(const ModelParams& params, std::span<const Token> context);
double loss(const ModelParams& params, const Sample& sample);
Token predict(const ModelParams& params, std::span<const Token> context);

struct BackwardResult {
    double loss = 0.0;
    Gradients grads;
    Vector score_gradients;  // d loss / d u_l per context position
};

/// Exact gradients of the last-position cross entropy; W_E collects both its
/// embedding and unembedding roles.
BackwardResult backward(const ModelParams& params, const Sample& sample);

/// d loss / d u_{t, t_L} with the score of each token shared across all of its positions.
Vector token_score_gradients(const BackwardResult& result, std::span<const Token> context, std::uint32_t vocab);

/// Token-space tables for fast batch evaluation. With no positional encoding,
/// the score of key t for query t' is S(t, t') and the logits of a context
/// with aggregated attention mass a are R a, where R = W_E^T W_V W_E.
class TokenTables {
public:
    explicit TokenTables(const ModelParams& params);

    const Matrix& scores() const { return scores_; }
    const Matrix& readout() const { return readout_; }

    /// Logits and per-position attention weights for one context.
    Vector logits(std::span<const Token> context, Vector* attention = nullptr) const;
    Token predict(std::span<const Token> context) const;

private:
    Matrix scores_;   // V x V, (key, query)
    Matrix readout_;  // V x V
};

struct BatchResult {
    double mean_loss = 0.0;
    Gradients grads;  // averaged over the batch
};

/// Batch-averaged loss and gradients computed through TokenTables; agrees with
/// averaging backward() over the batch. Samples are reduced in order.
BatchResult batch_backward(const ModelParams& params, std::span<const Sample> batch);

}  // namespace lca
