#include <doctest.h>

#include <cmath>
#include <numeric>

#include "lca/constructions.hpp"
#include "lca/errors.hpp"
#include "lca/latent_task.hpp"
#include "lca/model.hpp"
#include "model_oracle.hpp"

using namespace lca;
using namespace lca::testing;

namespace {

ModelParams one_hot_model(int m) {
    const int V = 1 << m;
    ModelParams p = ModelParams::zeros(m, V, V);
    p.W_E = Matrix::Identity(V, V);
    p.W_V = Matrix::Identity(V, V);
    return p;
}

Context ctx(std::initializer_list<std::uint32_t> ids) {
    Context c;
    for (auto i : ids) c.push_back(Token{i});
    return c;
}

}  // namespace

TEST_CASE("zero key and query weights give uniform attention") {
    Pcg32 rng(1, 1);
    auto p = random_params(3, 6, 4, 0.5, rng);
    p.W_K.setZero();
    p.W_Q.setZero();
    auto tr = forward(p, ctx({1, 5, 5, 2, 7}));
    for (Eigen::Index l = 0; l < 5; ++l) CHECK(tr.attention_weights(l) == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("one-hot embeddings with identity value matrix give token frequencies") {
    auto p = one_hot_model(3);
    auto tr = forward(p, ctx({1, 2, 4, 1}));
    for (int t = 0; t < 8; ++t) {
        double expected = t == 1 ? 0.5 : (t == 2 || t == 4) ? 0.25 : 0.0;
        CHECK(tr.logits(t) == doctest::Approx(expected).epsilon(1e-15));
    }
}

TEST_CASE("associative value matrix sums neighbor frequencies") {
    auto p = one_hot_model(3);
    p.W_V = construct_value_matrix(p.W_E, NeighborhoodKind::Full, 3);
    auto c = ctx({1, 2, 4, 1});
    auto tr = forward(p, c);
    CHECK(tr.logits(0) == doctest::Approx(1.0));
    CHECK(tr.logits(3) == doctest::Approx(0.75));
    CHECK(tr.logits(7) == doctest::Approx(0.0));
    CHECK(predict(p, c).id == 0);
}

TEST_CASE("forward trace invariants") {
    Pcg32 rng(2, 2);
    for (int trial = 0; trial < 10; ++trial) {
        auto p = random_params(4, 7, 5, 0.8, rng);
        auto s = random_sample(4, 12, rng);
        auto tr = forward(p, s.context);
        CHECK(std::abs(tr.attention_weights.sum() - 1.0) < 1e-10);
        Vector h = Vector::Zero(7);
        for (std::size_t l = 0; l < s.context.size(); ++l)
            h += tr.attention_weights(static_cast<Eigen::Index>(l)) * p.W_E.col(s.context[l].id);
        CHECK((h - tr.hidden).cwiseAbs().maxCoeff() < 1e-12);
        auto ref = Oracle(p).logits(s.context);
        for (int t = 0; t < 16; ++t) CHECK(std::abs(tr.logits(t) - static_cast<double>(ref[t])) < 1e-12);
    }
}

TEST_CASE("forward rejects bad contexts") {
    auto p = one_hot_model(3);
    CHECK_THROWS_AS(forward(p, Context{}), InvalidInput);
    CHECK_THROWS_AS(forward(p, ctx({1, 8})), InvalidInput);
}

TEST_CASE("cross entropy") {
    CHECK(cross_entropy(Vector::Zero(8), Token{3}) == doctest::Approx(std::log(8.0)).epsilon(1e-15));
    Vector f = Vector::Zero(8);
    f(2) = 1000.0;
    CHECK(cross_entropy(f, Token{2}) < 1e-6);
    CHECK(cross_entropy(f, Token{1}) == doctest::Approx(1000.0));

    Pcg32 rng(3, 3);
    for (int trial = 0; trial < 20; ++trial) {
        auto p = random_params(3, 5, 3, 1.0, rng);
        auto s = random_sample(3, 9, rng);
        const double l1 = loss(p, s);
        const double l2 = -std::log(softmax(forward(p, s.context).logits)(s.target.id));
        CHECK(l1 >= 0.0);
        CHECK(std::abs(l1 - l2) < 1e-10);
        CHECK(std::abs(l1 - static_cast<double>(Oracle(p).loss(s))) < 1e-12);
    }
}

TEST_CASE("predict breaks ties toward the lowest token") {
    CHECK(argmax_lowest(Vector::Zero(8)).id == 0);
    Vector f(4);
    f << 0.1, 0.7, 0.7, 0.2;
    CHECK(argmax_lowest(f).id == 1);
}

TEST_CASE("a single-token context with identity value matrix predicts that token") {
    Pcg32 rng(4, 4);
    for (int m = 3; m <= 5; ++m) {
        ModelParams p = ModelParams::zeros(m, 1 << m, 1 << m);
        p.W_E = orthonormal_embeddings(1u << m, 1 << m, rng);
        p.W_V = Matrix::Identity(1 << m, 1 << m);
        for (std::uint32_t j = 0; j < (1u << m); ++j) CHECK(predict(p, ctx({j})).id == j);
    }
}

TEST_CASE("positions before the last are exchangeable") {
    Pcg32 rng(5, 5);
    for (int trial = 0; trial < 10; ++trial) {
        auto p = random_params(4, 6, 6, 0.7, rng);
        auto s = random_sample(4, 10, rng);
        auto shuffled = s.context;
        for (std::size_t i = shuffled.size() - 2; i > 0; --i) std::swap(shuffled[i], shuffled[rng.below(i + 1)]);
        auto a = forward(p, s.context), b = forward(p, shuffled);
        CHECK((a.hidden - b.hidden).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((a.logits - b.logits).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("rescaling keys by c and queries by 1/c leaves the output unchanged") {
    Pcg32 rng(6, 6);
    auto p = random_params(3, 5, 4, 0.9, rng);
    auto s = random_sample(3, 8, rng);
    auto scaled = p;
    scaled.W_K *= 3.5;
    scaled.W_Q /= 3.5;
    auto a = forward(p, s.context), b = forward(scaled, s.context);
    CHECK((a.attention_weights - b.attention_weights).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((a.logits - b.logits).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("associative logits equal neighbor frequency sums") {
    Pcg32 rng(7, 7);
    for (int m = 3; m <= 4; ++m) {
        const int V = 1 << m;
        for (int trial = 0; trial < 20; ++trial) {
            ModelParams p = ModelParams::zeros(m, V + 3, 2);
            p.W_E = orthonormal_embeddings(static_cast<std::uint32_t>(V), V + 3, rng);
            p.W_V = construct_value_matrix(p.W_E, NeighborhoodKind::Full, m);
            auto s = random_sample(m, 1 + static_cast<int>(rng.below(30)), rng);
            auto tr = forward(p, s.context);
            std::vector<double> alpha(V, 0.0);
            for (auto t : s.context) alpha[t.id] += 1.0 / s.context.size();
            for (int t = 0; t < V; ++t) {
                double expected = 0.0;
                for (int bit = 0; bit < m; ++bit) expected += alpha[t ^ (1 << bit)];
                CHECK(std::abs(tr.logits(t) - expected) < 1e-12);
            }
        }
    }
}

TEST_CASE("analytic gradients match central finite differences") {
    Pcg32 rng(8, 8);
    const LD h = 1e-5L;
    int checked = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const int m = 3, d = 4 + trial % 3, d_a = 2 + trial % 4;
        auto p = random_params(m, d, d_a, 0.6, rng);
        auto s = random_sample(m, 3 + trial % 7, rng);
        auto res = backward(p, s);
        CHECK(res.grads.all_finite());
        CHECK(res.loss == doctest::Approx(loss(p, s)).epsilon(1e-14));
        Oracle base(p);
        for (auto id : kAllMatrices) {
            const int k = static_cast<int>(id);
            const Matrix& g = res.grads.get(id);
            const Eigen::Index cols = p.get(id).cols();
            for (std::size_t i = 0; i < base.w[k].size(); ++i) {
                Oracle plus = base, minus = base;
                plus.w[k][i] += h;
                minus.w[k][i] -= h;
                const double fd = static_cast<double>((plus.loss(s) - minus.loss(s)) / (2 * h));
                const double an = g(static_cast<Eigen::Index>(i) / cols, static_cast<Eigen::Index>(i) % cols);
                const double scale = std::max({std::abs(fd), std::abs(an), 1e-6});
                CHECK(std::abs(fd - an) / scale <= 1e-4);
                ++checked;
            }
        }
    }
    CHECK(checked > 1000);
}

TEST_CASE("score gradients") {
    Pcg32 rng(9, 9);
    for (int trial = 0; trial < 20; ++trial) {
        auto p = random_params(3, 5, 3, 0.8, rng);
        auto s = random_sample(3, 6 + trial % 5, rng);
        auto res = backward(p, s);
        const auto V = p.vocab();

        {  // per-position values against a finite difference on the score
            auto tr = forward(p, s.context);
            for (Eigen::Index l = 0; l < tr.scores.size(); ++l) {
                auto f = [&](double du) {
                    Vector u = tr.scores;
                    u(l) += du;
                    Vector w = softmax(u);
                    Vector hid = Vector::Zero(p.d());
                    for (std::size_t j = 0; j < s.context.size(); ++j) hid += w(static_cast<Eigen::Index>(j)) * p.W_E.col(s.context[j].id);
                    return cross_entropy(p.W_E.transpose() * (p.W_V * hid), s.target);
                };
                const double fd = (f(1e-6) - f(-1e-6)) / 2e-6;
                CHECK(std::abs(fd - res.score_gradients(l)) < 1e-7);
            }
        }

        auto per_token = token_score_gradients(res, s.context, V);
        auto shared = closed_form_shared(p, s);
        auto literal = closed_form_literal(p, s);
        std::vector<int> alpha(V, 0);
        for (auto t : s.context) ++alpha[t.id];
        for (std::uint32_t t = 0; t < V; ++t) {
            CHECK(std::abs(per_token(t) - shared(t)) <= 1e-8);
            if (alpha[t] == 1) CHECK(std::abs(per_token(t) - literal(t)) <= 1e-8);
            if (alpha[t] == 0) CHECK(per_token(t) == 0.0);
        }
    }
}

TEST_CASE("the literal closed form drops a factor on repeated tokens") {
    Pcg32 rng(10, 10);
    auto p = random_params(3, 5, 3, 0.8, rng);
    Sample s{ctx({3, 3, 3, 1}), Token{6}};
    auto per_token = token_score_gradients(backward(p, s), s.context, 8);
    CHECK(std::abs(per_token(3) - closed_form_shared(p, s)(3)) <= 1e-12);
    CHECK(std::abs(per_token(3) - closed_form_literal(p, s)(3)) > 1e-6);
}

TEST_CASE("zero keys and queries still have well-defined gradients") {
    Pcg32 rng(11, 11);
    auto p = random_params(3, 5, 3, 0.8, rng);
    p.W_K.setZero();
    p.W_Q.setZero();
    auto s = random_sample(3, 7, rng);
    auto res = backward(p, s);
    CHECK(res.grads.all_finite());
    // dL/dW_K is proportional to W_Q, so it vanishes at zero queries; W_Q's gradient is likewise zero.
    CHECK(res.grads.W_K.cwiseAbs().maxCoeff() == 0.0);
    CHECK(res.grads.W_Q.cwiseAbs().maxCoeff() == 0.0);
    CHECK(res.grads.W_V.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("token tables agree with the direct forward pass") {
    Pcg32 rng(12, 12);
    auto p = random_params(4, 9, 5, 0.7, rng);
    TokenTables tables(p);
    for (int trial = 0; trial < 30; ++trial) {
        auto s = random_sample(4, 1 + trial, rng);
        Vector attn;
        Vector f = tables.logits(s.context, &attn);
        auto tr = forward(p, s.context);
        CHECK((f - tr.logits).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((attn - tr.attention_weights).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(tables.predict(s.context) == predict(p, s.context));
    }
}

TEST_CASE("batch gradients equal the mean of per-sample gradients") {
    Pcg32 rng(13, 13);
    auto p = random_params(4, 8, 6, 0.7, rng);
    std::vector<Sample> batch;
    for (int i = 0; i < 25; ++i) batch.push_back(random_sample(4, 20, rng));
    auto res = batch_backward(p, batch);
    Gradients sum = Gradients::zeros_like(p);
    double loss_sum = 0.0;
    for (const auto& s : batch) {
        auto r = backward(p, s);
        sum += r.grads;
        loss_sum += r.loss;
    }
    sum *= 1.0 / batch.size();
    CHECK(res.mean_loss == doctest::Approx(loss_sum / batch.size()).epsilon(1e-12));
    for (auto id : kAllMatrices) CHECK((res.grads.get(id) - sum.get(id)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("splitting a batch and recombining gives the same gradient") {
    Pcg32 rng(14, 14);
    auto p = random_params(3, 6, 6, 0.7, rng);
    std::vector<Sample> batch;
    for (int i = 0; i < 16; ++i) batch.push_back(random_sample(3, 12, rng));
    auto whole = batch_backward(p, batch);
    auto first = batch_backward(p, std::span(batch).first(7));
    auto second = batch_backward(p, std::span(batch).subspan(7));
    first.grads *= 7.0;
    second.grads *= 9.0;
    first.grads += second.grads;
    first.grads *= 1.0 / 16.0;
    for (auto id : kAllMatrices) CHECK((whole.grads.get(id) - first.grads.get(id)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("batch gradients match finite differences") {
    Pcg32 rng(15, 15);
    auto p = random_params(3, 4, 3, 0.6, rng);
    std::vector<Sample> batch;
    for (int i = 0; i < 5; ++i) batch.push_back(random_sample(3, 6, rng));
    auto res = batch_backward(p, batch);
    Oracle base(p);
    const LD h = 1e-5L;
    auto mean_loss = [&](const Oracle& o) {
        LD total = 0.0L;
        for (const auto& s : batch) total += o.loss(s);
        return total / batch.size();
    };
    for (auto id : kAllMatrices) {
        const int k = static_cast<int>(id);
        const Eigen::Index cols = p.get(id).cols();
        for (std::size_t i = 0; i < base.w[k].size(); ++i) {
            Oracle plus = base, minus = base;
            plus.w[k][i] += h;
            minus.w[k][i] -= h;
            const double fd = static_cast<double>((mean_loss(plus) - mean_loss(minus)) / (2 * h));
            const double an = res.grads.get(id)(static_cast<Eigen::Index>(i) / cols, static_cast<Eigen::Index>(i) % cols);
            CHECK(std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}) <= 1e-4);
        }
    }
}

TEST_CASE("params validation") {
    auto p = one_hot_model(3);
    CHECK_NOTHROW(p.validate());
    p.W_V(0, 0) = std::nan("");
    CHECK_THROWS_AS(p.validate(), InvalidInput);
    p = one_hot_model(3);
    p.W_K.resize(3, 5);
    CHECK_THROWS_AS(p.validate(), InvalidInput);
    CHECK(to_string(MatrixId::Query) == "W_Q");
    CHECK(parse_matrix_id("W_V") == MatrixId::Value);
}
