#include "lca/model.hpp"

#include <cmath>
#include <string>

#include "lca/errors.hpp"

namespace lca {

namespace {

void check_context(const ModelParams& params, std::span<const Token> context) {
    if (context.empty()) throw InvalidInput("context must be non-empty");
    for (auto t : context) {
        if (t.id >= params.vocab()) throw InvalidInput("context token " + std::to_string(t.id) + " out of range");
    }
}

}  // namespace

std::string_view to_string(MatrixId id) {
    switch (id) {
        case MatrixId::Embedding: return "W_E";
        case MatrixId::Key: return "W_K";
        case MatrixId::Query: return "W_Q";
        case MatrixId::Value: return "W_V";
    }
    return "?";
}

MatrixId parse_matrix_id(std::string_view name) {
    for (auto id : kAllMatrices) {
        if (to_string(id) == name) return id;
    }
    throw ConfigError("unknown matrix name '" + std::string(name) + "'");
}

Matrix& ModelParams::get(MatrixId id) {
    switch (id) {
        case MatrixId::Embedding: return W_E;
        case MatrixId::Key: return W_K;
        case MatrixId::Query: return W_Q;
        case MatrixId::Value: break;
    }
    return W_V;
}

const Matrix& ModelParams::get(MatrixId id) const { return const_cast<ModelParams*>(this)->get(id); }

void ModelParams::validate() const {
    if (m < 1 || m > kMaxLatentBits) throw InvalidInput("model m out of range");
    if (W_E.cols() != static_cast<Eigen::Index>(vocab())) throw InvalidInput("W_E must have V = 2^m columns");
    if (W_E.rows() < 1 || W_K.rows() < 1) throw InvalidInput("d and d_a must be positive");
    if (W_K.cols() != W_E.rows() || W_Q.rows() != W_K.rows() || W_Q.cols() != W_E.rows()) {
        throw InvalidInput("W_K and W_Q must be d_a x d");
    }
    if (W_V.rows() != W_E.rows() || W_V.cols() != W_E.rows()) throw InvalidInput("W_V must be d x d");
    for (auto id : kAllMatrices) {
        if (!get(id).allFinite()) throw InvalidInput(std::string(to_string(id)) + " has non-finite entries");
    }
}

ModelParams ModelParams::zeros(int m, int d, int d_a) {
    ModelParams p;
    p.m = m;
    p.W_E = Matrix::Zero(d, Eigen::Index{1} << m);
    p.W_K = Matrix::Zero(d_a, d);
    p.W_Q = Matrix::Zero(d_a, d);
    p.W_V = Matrix::Zero(d, d);
    return p;
}

Gradients Gradients::zeros_like(const ModelParams& p) {
    return {Matrix::Zero(p.W_E.rows(), p.W_E.cols()), Matrix::Zero(p.W_K.rows(), p.W_K.cols()),
            Matrix::Zero(p.W_Q.rows(), p.W_Q.cols()), Matrix::Zero(p.W_V.rows(), p.W_V.cols())};
}

Matrix& Gradients::get(MatrixId id) {
    switch (id) {
        case MatrixId::Embedding: return W_E;
        case MatrixId::Key: return W_K;
        case MatrixId::Query: return W_Q;
        case MatrixId::Value: break;
    }
    return W_V;
}

const Matrix& Gradients::get(MatrixId id) const { return const_cast<Gradients*>(this)->get(id); }

Gradients& Gradients::operator+=(const Gradients& o) {
    for (auto id : kAllMatrices) get(id) += o.get(id);
    return *this;
}

Gradients& Gradients::operator*=(double s) {
    for (auto id : kAllMatrices) get(id) *= s;
    return *this;
}

bool Gradients::all_finite() const {
    for (auto id : kAllMatrices) {
        if (!get(id).allFinite()) return false;
    }
    return true;
}

Vector softmax(const Vector& x) {
    const double mx = x.maxCoeff();
    Vector e = (x.array() - mx).exp();
    return e / e.sum();
}

double cross_entropy(const Vector& logits, Token target) {
    const double mx = logits.maxCoeff();
    const double lse = mx + std::log((logits.array() - mx).exp().sum());
    return lse - logits(target.id);
}

Token argmax_lowest(const Vector& logits) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < logits.size(); ++i) {
        if (logits(i) > logits(best)) best = i;
    }
    return Token{static_cast<std::uint32_t>(best)};
}

ForwardTrace forward(const ModelParams& params, std::span<const Token> context) {
    check_context(params, context);
    const auto len = static_cast<Eigen::Index>(context.size());
    Matrix emb(params.d(), len);
    for (Eigen::Index l = 0; l < len; ++l) emb.col(l) = params.W_E.col(context[static_cast<std::size_t>(l)].id);

    const double scale = 1.0 / std::sqrt(static_cast<double>(params.d_a()));
    const Matrix keys = params.W_K * emb;
    const Vector query = params.W_Q * emb.col(len - 1);

    ForwardTrace tr;
    tr.scores = (keys.transpose() * query) * scale;
    tr.attention_weights = softmax(tr.scores);
    tr.hidden = emb * tr.attention_weights;
    tr.logits = params.W_E.transpose() * (params.W_V * tr.hidden);
    return tr;
}

double loss(const ModelParams& params, const Sample& sample) {
    return cross_entropy(forward(params, sample.context).logits, sample.target);
}

Token predict(const ModelParams& params, std::span<const Token> context) {
    return argmax_lowest(forward(params, context).logits);
}

BackwardResult backward(const ModelParams& params, const Sample& sample) {
    const auto& ctx = sample.context;
    check_context(params, ctx);
    if (sample.target.id >= params.vocab()) throw InvalidInput("target out of range");

    const auto len = static_cast<Eigen::Index>(ctx.size());
    Matrix emb(params.d(), len);
    for (Eigen::Index l = 0; l < len; ++l) emb.col(l) = params.W_E.col(ctx[static_cast<std::size_t>(l)].id);

    const double scale = 1.0 / std::sqrt(static_cast<double>(params.d_a()));
    const Matrix keys = params.W_K * emb;
    const Vector query = params.W_Q * emb.col(len - 1);
    const Vector scores = (keys.transpose() * query) * scale;
    const Vector p = softmax(scores);
    const Vector h = emb * p;
    const Vector v = params.W_V * h;
    const Vector logits = params.W_E.transpose() * v;

    BackwardResult out;
    out.loss = cross_entropy(logits, sample.target);
    out.grads = Gradients::zeros_like(params);
    auto& g = out.grads;

    Vector dlogits = softmax(logits);
    dlogits(sample.target.id) -= 1.0;

    // Unembedding role of W_E.
    g.W_E.noalias() += v * dlogits.transpose();
    const Vector dv = params.W_E * dlogits;
    g.W_V.noalias() = dv * h.transpose();
    const Vector dh = params.W_V.transpose() * dv;

    const Vector dp = emb.transpose() * dh;
    const Vector du = p.array() * (dp.array() - p.dot(dp));
    out.score_gradients = du;

    // d u_l / d key_l = query * scale, d u_l / d query = key_l * scale.
    const Vector dquery = keys * du * scale;
    g.W_K.noalias() = (query * scale) * (emb * du).transpose();
    g.W_Q.noalias() = dquery * emb.col(len - 1).transpose();

    const Vector key_back = params.W_K.transpose() * query * scale;
    for (Eigen::Index l = 0; l < len; ++l) {
        auto col = g.W_E.col(ctx[static_cast<std::size_t>(l)].id);
        col += p(l) * dh;       // embedding in h(x)
        col += du(l) * key_back;  // embedding in the key
    }
    g.W_E.col(ctx.back().id) += params.W_Q.transpose() * dquery;
    return out;
}

Vector token_score_gradients(const BackwardResult& result, std::span<const Token> context, std::uint32_t vocab) {
    Vector out = Vector::Zero(vocab);
    for (std::size_t l = 0; l < context.size(); ++l) out(context[l].id) += result.score_gradients(static_cast<Eigen::Index>(l));
    return out;
}

TokenTables::TokenTables(const ModelParams& params) {
    params.validate();
    const double scale = 1.0 / std::sqrt(static_cast<double>(params.d_a()));
    const Matrix keys = params.W_K * params.W_E;
    const Matrix queries = params.W_Q * params.W_E;
    scores_ = (keys.transpose() * queries) * scale;
    readout_ = params.W_E.transpose() * (params.W_V * params.W_E);
}

Vector TokenTables::logits(std::span<const Token> context, Vector* attention) const {
    if (context.empty()) throw InvalidInput("context must be non-empty");
    const auto vocab = scores_.rows();
    const auto len = static_cast<Eigen::Index>(context.size());
    const std::uint32_t q = context.back().id;
    Vector u(len);
    for (Eigen::Index l = 0; l < len; ++l) {
        const auto t = context[static_cast<std::size_t>(l)].id;
        if (t >= vocab) throw InvalidInput("context token out of range");
        u(l) = scores_(t, q);
    }
    const Vector p = softmax(u);
    Vector mass = Vector::Zero(vocab);
    for (Eigen::Index l = 0; l < len; ++l) mass(context[static_cast<std::size_t>(l)].id) += p(l);
    if (attention) *attention = p;
    Vector out = Vector::Zero(vocab);
    for (Eigen::Index t = 0; t < vocab; ++t) {
        if (mass(t) != 0.0) out.noalias() += mass(t) * readout_.col(t);
    }
    return out;
}

Token TokenTables::predict(std::span<const Token> context) const { return argmax_lowest(logits(context)); }

BatchResult batch_backward(const ModelParams& params, std::span<const Sample> batch) {
    if (batch.empty()) throw InvalidInput("empty batch");
    params.validate();
    const Eigen::Index vocab = params.vocab();
    const double scale = 1.0 / std::sqrt(static_cast<double>(params.d_a()));

    const Matrix& emb = params.W_E;
    const Matrix keys = params.W_K * emb;
    const Matrix queries = params.W_Q * emb;
    const Matrix scores = (keys.transpose() * queries) * scale;
    const Matrix value_emb = params.W_V * emb;
    const Matrix readout = emb.transpose() * value_emb;

    Matrix d_scores = Matrix::Zero(vocab, vocab);
    Matrix d_readout = Matrix::Zero(vocab, vocab);

    std::vector<double> mass(static_cast<std::size_t>(vocab), 0.0);
    std::vector<double> dmass(static_cast<std::size_t>(vocab), 0.0);
    std::vector<char> seen(static_cast<std::size_t>(vocab), 0);
    std::vector<std::uint32_t> touched;
    Vector u, p, logits(vocab), dlogits(vocab);
    double total_loss = 0.0;

    for (const auto& s : batch) {
        const auto& ctx = s.context;
        check_context(params, ctx);
        if (s.target.id >= params.vocab()) throw InvalidInput("target out of range");
        const auto len = static_cast<Eigen::Index>(ctx.size());
        const std::uint32_t q = ctx.back().id;

        u.resize(len);
        for (Eigen::Index l = 0; l < len; ++l) u(l) = scores(ctx[static_cast<std::size_t>(l)].id, q);
        p = softmax(u);

        touched.clear();
        for (Eigen::Index l = 0; l < len; ++l) {
            const auto t = ctx[static_cast<std::size_t>(l)].id;
            if (!seen[t]) {
                seen[t] = 1;
                touched.push_back(t);
            }
            mass[t] += p(l);
        }

        logits.setZero();
        for (auto t : touched) logits.noalias() += mass[t] * readout.col(t);
        total_loss += cross_entropy(logits, s.target);

        dlogits = softmax(logits);
        dlogits(s.target.id) -= 1.0;

        double mean_dmass = 0.0;
        for (auto t : touched) {
            d_readout.col(t).noalias() += mass[t] * dlogits;
            dmass[t] = readout.col(t).dot(dlogits);
            mean_dmass += mass[t] * dmass[t];
        }
        for (Eigen::Index l = 0; l < len; ++l) {
            const auto t = ctx[static_cast<std::size_t>(l)].id;
            d_scores(t, q) += p(l) * (dmass[t] - mean_dmass);
        }
        for (auto t : touched) {
            mass[t] = 0.0;
            dmass[t] = 0.0;
            seen[t] = 0;
        }
    }

    const double inv = 1.0 / static_cast<double>(batch.size());
    d_scores *= inv;
    d_readout *= inv;

    BatchResult out;
    out.mean_loss = total_loss * inv;
    Gradients& g = out.grads;

    // readout = W_E^T (W_V W_E)
    g.W_E = value_emb * d_readout.transpose();
    const Matrix d_value_emb = emb * d_readout;
    g.W_V = d_value_emb * emb.transpose();
    g.W_E.noalias() += params.W_V.transpose() * d_value_emb;

    // scores = (W_K W_E)^T (W_Q W_E) * scale
    const Matrix d_keys = queries * d_scores.transpose() * scale;
    const Matrix d_queries = keys * d_scores * scale;
    g.W_K = d_keys * emb.transpose();
    g.W_Q = d_queries * emb.transpose();
    g.W_E.noalias() += params.W_K.transpose() * d_keys;
    g.W_E.noalias() += params.W_Q.transpose() * d_queries;
    return out;
}

}  // namespace lca
