#include <doctest.h>

#include <bit>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "lca/constructions.hpp"
#include "lca/errors.hpp"
#include "lca/latent_task.hpp"

using namespace lca;

namespace {

bool one_flip(std::uint32_t a, std::uint32_t b) { return std::popcount(a ^ b) == 1; }

// min over competitors of sum_{N1(y)} p - sum_{N1(y')} p, by enumeration.
double population_gap(int m, double beta, Token y) {
    TaskConfig cfg;
    cfg.m = m;
    cfg.beta = beta;
    cfg.omega = 1.0;
    auto p = informative_probs(y, cfg);
    auto mass = [&](std::uint32_t t) {
        double s = 0.0;
        for (int bit = 0; bit < m; ++bit) s += p[t ^ (1u << bit)];
        return s;
    };
    double best = std::numeric_limits<double>::infinity();
    for (std::uint32_t t = 0; t < cfg.vocab(); ++t)
        if (t != y.id) best = std::min(best, mass(y.id) - mass(t));
    return best;
}

long double bound_oracle(int m, long double beta, long double eps, long double n) {
    const long double gap = std::exp(-1.0L / beta) - std::exp(-2.0L / beta);
    const long double t1 = 100.0L * m * m * std::log(3.0L / eps) / (gap * gap);
    const long double t2 = 80.0L * m * m * n / (gap * gap);
    return std::ceil(std::max(t1, t2));
}

}  // namespace

TEST_CASE("orthonormal embeddings") {
    Pcg32 rng(1, 1);
    auto w = orthonormal_embeddings(8, 20, rng);
    CHECK(w.rows() == 20);
    CHECK(w.cols() == 8);
    CHECK((w.transpose() * w - Matrix::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-10);

    auto sq = orthonormal_embeddings(8, 8, rng);
    CHECK((sq * sq.transpose() - Matrix::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-10);

    CHECK_THROWS_AS(orthonormal_embeddings(8, 7, rng), Infeasible);
}

TEST_CASE("unorthogonalized Gaussian embeddings are nearly orthogonal in high dimension") {
    Pcg32 rng(2, 2);
    double worst = 0.0;
    for (int draw = 0; draw < 100; ++draw) {
        Matrix w = gaussian_matrix(256, 8, 1.0 / 16.0, rng);
        Matrix g = w.transpose() * w;
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j)
                if (i != j) worst = std::max(worst, std::abs(g(i, j)));
    }
    MESSAGE("max off-diagonal |Gram| over 100 draws: " << worst);
    CHECK(worst < 0.35);
}

TEST_CASE("gaussian_matrix moments") {
    Pcg32 rng(3, 3);
    Matrix w = gaussian_matrix(300, 300, 0.02, rng);
    const double n = static_cast<double>(w.size());
    CHECK(std::abs(w.mean()) < 4 * 0.02 / std::sqrt(n));
    CHECK(std::sqrt(w.squaredNorm() / n) == doctest::Approx(0.02).epsilon(0.01));
}

TEST_CASE("association matrix is the hypercube adjacency for Full") {
    for (int m = 3; m <= 5; ++m) {
        auto a = association_matrix(NeighborhoodKind::Full, m);
        for (std::uint32_t t = 0; t < (1u << m); ++t)
            for (std::uint32_t u = 0; u < (1u << m); ++u) CHECK(a(t, u) == (one_flip(t, u) ? 1.0 : 0.0));
    }
    Matrix eye = Matrix::Identity(8, 8);
    CHECK(construct_value_matrix(eye, NeighborhoodKind::Full, 3) == association_matrix(NeighborhoodKind::Full, 3));
}

TEST_CASE("cluster neighborhoods drop the cross-cluster flip") {
    auto a = association_matrix(NeighborhoodKind::ClusterFirstBit, 3);
    for (std::uint32_t t = 0; t < 8; ++t) {
        CHECK(a.row(t).sum() == 2.0);
        CHECK(a(t, t ^ 4u) == 0.0);
    }
    auto a2 = association_matrix(NeighborhoodKind::ClusterFirstTwoBits, 4);
    for (std::uint32_t t = 0; t < 16; ++t) CHECK(a2.row(t).sum() == 2.0);
    CHECK(association_matrix(NeighborhoodKind::OneHamming, 4) == association_matrix(NeighborhoodKind::Full, 4));
}

TEST_CASE("constructed value matrix reads out neighbor indicators") {
    Pcg32 rng(4, 4);
    for (auto kind : {NeighborhoodKind::Full, NeighborhoodKind::ClusterFirstBit}) {
        auto w = orthonormal_embeddings(16, 21, rng);
        auto v = construct_value_matrix(w, kind, 4);
        Matrix readout = w.transpose() * v * w;
        for (std::uint32_t t = 0; t < 16; ++t)
            for (std::uint32_t j = 0; j < 16; ++j) {
                bool member = one_flip(t, j) && in_neighborhood(kind, 4, Token{t}, Token{j});
                CHECK(std::abs(readout(t, j) - (member ? 1.0 : 0.0)) < 1e-10);
            }
    }
}

TEST_CASE("constructed value matrix is quadratic in the embeddings") {
    Pcg32 rng(5, 5);
    Matrix w = gaussian_matrix(10, 8, 1.0, rng);
    Matrix v1 = construct_value_matrix(w, NeighborhoodKind::Full, 3);
    Matrix v2 = construct_value_matrix(2.0 * w, NeighborhoodKind::Full, 3);
    CHECK((v2 - 4.0 * v1).cwiseAbs().maxCoeff() < 1e-12);

    Matrix w2 = gaussian_matrix(10, 8, 1.0, rng);
    Matrix sum = construct_value_matrix(w + w2, NeighborhoodKind::Full, 3);
    // Bilinear form: V(a+b) = V(a) + V(b) + cross terms.
    const Matrix a = association_matrix(NeighborhoodKind::Full, 3);
    Matrix expected = v1 + construct_value_matrix(w2, NeighborhoodKind::Full, 3) + w * a * w2.transpose() + w2 * a * w.transpose();
    CHECK((sum - expected).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("random control value matrix") {
    Pcg32 rng(6, 6);
    Matrix w = orthonormal_embeddings(32, 40, rng);
    Pcg32 r1(7, 7), r2(7, 7), r3(7, 7);
    Matrix v1 = random_value_matrix(w, NeighborhoodKind::Full, 5, r1);
    Matrix v2 = random_value_matrix(w, NeighborhoodKind::Full, 5, r2);
    CHECK(v1 == v2);
    Matrix counts = random_association_matrix(NeighborhoodKind::Full, 5, r3);
    for (Eigen::Index t = 0; t < 32; ++t) CHECK(counts.row(t).sum() == 5.0);
    CHECK((w * counts * w.transpose() - v1).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(counts != association_matrix(NeighborhoodKind::Full, 5));

    Pcg32 r4(8, 8);
    Matrix cluster_counts = random_association_matrix(NeighborhoodKind::ClusterFirstBit, 5, r4);
    for (Eigen::Index t = 0; t < 32; ++t) CHECK(cluster_counts.row(t).sum() == 4.0);
}

TEST_CASE("geometry Gram entries") {
    EmbeddingGeometry geom{0.1, 0.5, 2.0};
    Matrix g = geometry_gram(geom, 3);
    for (std::uint32_t t = 0; t < 8; ++t)
        for (std::uint32_t u = 0; u < 8; ++u) {
            double expected = t == u ? 2.0 : -0.1 * std::popcount(t ^ u) + 0.5;
            CHECK(g(t, u) == doctest::Approx(expected).epsilon(1e-15));
        }
}

TEST_CASE("geometry embeddings reproduce the Gram matrix") {
    Pcg32 rng(9, 9);
    SUBCASE("feasible example is PSD") {
        EmbeddingGeometry geom{0.1, 0.5, 2.0};
        Eigen::SelfAdjointEigenSolver<Matrix> es(geometry_gram(geom, 3));
        CHECK(es.eigenvalues().minCoeff() >= -1e-10);
        Matrix w = geometry_embeddings(geom, 3, 8, rng);
        CHECK((w.transpose() * w - geometry_gram(geom, 3)).cwiseAbs().maxCoeff() < 1e-8);
    }
    SUBCASE("zero slope and intercept give orthonormal columns") {
        Matrix w = geometry_embeddings({0.0, 0.0, 1.0}, 4, 20, rng);
        CHECK((w.transpose() * w - Matrix::Identity(16, 16)).cwiseAbs().maxCoeff() < 1e-8);
    }
    SUBCASE("low-rank geometry fits in few dimensions") {
        for (int m = 3; m <= 6; ++m) {
            EmbeddingGeometry geom{1.0, 0.5 * m + 0.25, 0.5 * m + 0.25};
            Matrix w = geometry_embeddings(geom, m, m + 2, rng);
            CHECK(w.rows() == m + 2);
            CHECK((w.transpose() * w - geometry_gram(geom, m)).cwiseAbs().maxCoeff() < 1e-8);
        }
    }
    SUBCASE("wide embeddings") {
        EmbeddingGeometry geom{0.3, 1.0, 3.0};
        Matrix w = geometry_embeddings(geom, 5, 64, rng);
        CHECK((w.transpose() * w - geometry_gram(geom, 5)).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("infeasible geometries are rejected") {
    Pcg32 rng(10, 10);
    try {
        geometry_embeddings({1.0, 0.0, 0.1}, 3, 8, rng);
        FAIL("expected Infeasible");
    } catch (const Infeasible& e) {
        CHECK(std::string(e.what()).find("eigenvalue") != std::string::npos);
    }
    CHECK_THROWS_AS(geometry_embeddings({0.1, 0.5, 2.0}, 3, 4, rng), Infeasible);
}

TEST_CASE("equal diagonal and intercept bound the rank by m+2") {
    for (int m = 3; m <= 6; ++m)
        for (double a : {0.1, 1.0, 2.5})
            for (double b : {-1.0, 0.0, 0.7, 3.0}) {
                Matrix g = geometry_gram({a, b, b}, m);
                CHECK(numerical_rank(g) <= m + 2);
            }
    // A generic geometry is full rank.
    CHECK(numerical_rank(geometry_gram({0.1, 0.5, 2.0}, 4)) == 16);
}

TEST_CASE("sufficient context length fixtures") {
    CHECK(theorem_bound_L(3, 1.0, 0.05, 7) == 93201u);
    CHECK(theorem_bound_L(4, 1.0, 0.05, 15) == 355051u);
    CHECK(theorem_bound_L(3, 2.0, 0.001, 7) == 126518u);
    CHECK(theorem_bound_L(5, 0.5, 0.01, 31) == 4527664u);
    for (int m = 3; m <= 8; ++m)
        for (double beta : {0.5, 1.0, 3.0})
            for (double eps : {1e-6, 0.05, 0.5}) {
                const std::size_t n = (1u << m) - 1;
                CHECK(static_cast<long double>(theorem_bound_L(m, beta, eps, n)) == bound_oracle(m, beta, eps, n));
            }
}

TEST_CASE("sufficient context length shape and domain") {
    // Near eps = 1 the log term is about log 3 and the neighborhood term dominates.
    CHECK(static_cast<long double>(theorem_bound_L(3, 1.0, 1.0 - 1e-9, 7)) == bound_oracle(3, 1.0, 1.0, 7));
    for (int m = 3; m < 8; ++m) CHECK(theorem_bound_L(m, 1.0, 0.05, 7) < theorem_bound_L(m + 1, 1.0, 0.05, 7));
    // Small neighborhoods let the log term dominate, where the bound decreases in eps.
    CHECK(theorem_bound_L(3, 1.0, 1e-4, 1) > theorem_bound_L(3, 1.0, 1e-3, 1));
    CHECK(theorem_bound_L(3, 1.0, 1e-3, 1) > theorem_bound_L(3, 1.0, 1e-2, 1));
    CHECK(theorem_bound_L(3, 1.0, 0.01, 7) >= theorem_bound_L(3, 1.0, 0.5, 7));
    CHECK_THROWS_AS(theorem_bound_L(3, 1.0, 0.0, 7), InvalidInput);
    CHECK_THROWS_AS(theorem_bound_L(3, 1.0, 1.0, 7), InvalidInput);
    CHECK_THROWS_AS(theorem_bound_L(3, 1.0, 3.0, 7), InvalidInput);
    CHECK_THROWS_AS(theorem_bound_L(2, 1.0, 0.05, 3), InvalidInput);
    CHECK_THROWS_AS(theorem_bound_L(3, 0.0, 0.05, 7), InvalidInput);
}

TEST_CASE("hypothetical model") {
    Pcg32 rng(11, 11);
    auto p = build_hypothetical_model(4, 20, rng);
    CHECK(p.W_K.cwiseAbs().maxCoeff() == 0.0);
    CHECK(p.W_Q.cwiseAbs().maxCoeff() == 0.0);
    CHECK((p.W_E.transpose() * p.W_E - Matrix::Identity(16, 16)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK_THROWS_AS(build_hypothetical_model(4, 15, rng), Infeasible);
}

TEST_CASE("hypothetical model is exact on one-Hamming data") {
    Pcg32 rng(12, 12);
    for (int m = 3; m <= 5; ++m) {
        auto p = build_hypothetical_model(m, 1 << m, rng);
        TaskConfig task;
        task.m = m;
        task.omega = 1.0;
        task.neighborhood = NeighborhoodKind::OneHamming;
        task.context_len = 64;
        TaskSampler sampler(task);
        int errors = 0;
        for (int i = 0; i < 2000; ++i) {
            auto s = sampler.sample(rng);
            errors += predict(p, s.context) != s.target;
        }
        CHECK(errors == 0);
    }
}

TEST_CASE("two shared neighbors can tie on a very short context") {
    // 1 and 2 are neighbors of both 0 and 3; the lowest-id tie-break picks 0.
    Pcg32 rng(13, 13);
    auto p = build_hypothetical_model(3, 8, rng);
    Context c{Token{1}, Token{2}};
    auto f = forward(p, c).logits;
    CHECK(std::abs(f(0) - f(3)) < 1e-12);
    CHECK(predict(p, c).id == 0);
}

TEST_CASE("identity value matrix misreads a repeated neighbor") {
    Pcg32 rng(14, 14);
    for (int m = 3; m <= 4; ++m) {
        auto p = build_hypothetical_model(m, 1 << m, rng);
        p.W_V = Matrix::Identity(1 << m, 1 << m);
        for (std::uint32_t y = 0; y < (1u << m); ++y)
            for (auto j : one_hamming_neighborhood(NeighborhoodKind::Full, m, Token{y})) {
                Context c(5, j);
                CHECK(predict(p, c) == j);
                CHECK(predict(p, c) != Token{y});
            }
    }
}

TEST_CASE("instrumented logit gap") {
    Pcg32 rng(15, 15);
    for (int m = 3; m <= 5; ++m) {
        const double beta = 1.0;
        auto p = build_hypothetical_model(m, 1 << m, rng);
        TaskConfig task;
        task.m = m;
        task.omega = 1.0;
        task.beta = beta;
        task.context_len = 4000;
        TaskSampler sampler(task);
        const double literal = std::exp(-1.0 / beta) - std::exp(-2.0 / beta);
        for (int trial = 0; trial < 20; ++trial) {
            auto s = sampler.sample(rng);
            auto pi = informative_probs(s.target, task);
            std::vector<double> alpha(task.vocab(), 0.0);
            for (auto t : s.context) alpha[t.id] += 1.0 / s.context.size();
            double delta = 0.0;
            for (std::uint32_t t = 0; t < task.vocab(); ++t) delta = std::max(delta, std::abs(alpha[t] - pi[t]));
            const double gap = population_gap(m, beta, s.target);
            auto f = forward(p, s.context).logits;
            for (std::uint32_t t = 0; t < task.vocab(); ++t) {
                if (t == s.target.id) continue;
                const double observed = f(s.target.id) - f(t);
                CHECK(observed >= gap - 2.0 * m * delta - 1e-12);
                if (m >= 4) CHECK(observed >= literal - 2.0 * m * delta - 1e-12);
            }
        }
    }
}

TEST_CASE("the unnormalized constant overstates the m=3 population gap") {
    CHECK(population_gap(3, 1.0, Token{0}) == doctest::Approx(0.20397973589322005).epsilon(1e-12));
    CHECK(population_gap(3, 1.0, Token{0}) < std::exp(-1.0) - std::exp(-2.0));
    CHECK(population_gap(4, 1.0, Token{0}) == doctest::Approx(0.2543728230524956).epsilon(1e-12));
    CHECK(population_gap(5, 1.0, Token{0}) == doctest::Approx(0.2518588070555321).epsilon(1e-12));
}

TEST_CASE("numerical rank") {
    CHECK(numerical_rank(Matrix::Identity(5, 5)) == 5);
    CHECK(numerical_rank(Matrix::Zero(4, 4)) == 0);
    Vector u = Vector::LinSpaced(6, 1.0, 6.0);
    CHECK(numerical_rank(u * u.transpose()) == 1);
}
