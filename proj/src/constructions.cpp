#include "lca/constructions.hpp"

#include <cmath>
#include <string>

#include "lca/errors.hpp"

namespace lca {

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Pcg32& rng) {
    Matrix out(rows, cols);
    // Column-major fill order is part of the reproducibility contract.
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = stddev * rng.normal();
    }
    return out;
}

Matrix orthonormal_embeddings(std::uint32_t vocab, int d, Pcg32& rng) {
    if (d < static_cast<int>(vocab)) {
        throw Infeasible("orthonormal embeddings need d >= V (d=" + std::to_string(d) + ", V=" + std::to_string(vocab) + ")");
    }
    const Matrix g = gaussian_matrix(d, vocab, 1.0, rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    return qr.householderQ() * Matrix::Identity(d, vocab);
}

Matrix association_matrix(NeighborhoodKind kind, int m) {
    const Eigen::Index v = Eigen::Index{1} << m;
    Matrix a = Matrix::Zero(v, v);
    for (Eigen::Index t = 0; t < v; ++t) {
        for (auto n : one_hamming_neighborhood(kind, m, Token{static_cast<std::uint32_t>(t)})) a(t, n.id) = 1.0;
    }
    return a;
}

Matrix construct_value_matrix(const Matrix& embeddings, NeighborhoodKind kind, int m) {
    if (embeddings.cols() != (Eigen::Index{1} << m)) throw InvalidInput("embedding matrix must have 2^m columns");
    return embeddings * association_matrix(kind, m) * embeddings.transpose();
}

Matrix random_association_matrix(NeighborhoodKind kind, int m, Pcg32& rng) {
    const Eigen::Index v = Eigen::Index{1} << m;
    Matrix a = Matrix::Zero(v, v);
    for (Eigen::Index t = 0; t < v; ++t) {
        const auto partners = one_hamming_neighborhood(kind, m, Token{static_cast<std::uint32_t>(t)}).size();
        for (std::size_t k = 0; k < partners; ++k) a(t, static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(v)))) += 1.0;
    }
    return a;
}

Matrix random_value_matrix(const Matrix& embeddings, NeighborhoodKind kind, int m, Pcg32& rng) {
    if (embeddings.cols() != (Eigen::Index{1} << m)) throw InvalidInput("embedding matrix must have 2^m columns");
    return embeddings * random_association_matrix(kind, m, rng) * embeddings.transpose();
}

Matrix geometry_gram(const EmbeddingGeometry& geom, int m) {
    const Eigen::Index v = Eigen::Index{1} << m;
    Matrix g(v, v);
    for (Eigen::Index i = 0; i < v; ++i) {
        for (Eigen::Index j = 0; j < v; ++j) {
            g(i, j) = i == j ? geom.b0
                             : -geom.a * hamming(Token{static_cast<std::uint32_t>(i)}, Token{static_cast<std::uint32_t>(j)}) + geom.b;
        }
    }
    return g;
}

Matrix geometry_embeddings(const EmbeddingGeometry& geom, int m, int d, Pcg32& rng) {
    if (m < 1 || m > kMaxLatentBits) throw InvalidInput("m out of range");
    const Matrix gram = geometry_gram(geom, m);
    const Eigen::Index v = gram.rows();
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
    const Vector& lambda = es.eigenvalues();  // ascending
    const double lmax = std::max(std::abs(lambda(v - 1)), std::abs(lambda(0)));
    if (lambda(0) < -1e-10 * std::max(1.0, lmax)) {
        throw Infeasible("target Gram is not positive semidefinite (min eigenvalue " + std::to_string(lambda(0)) + ")");
    }
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < v; ++i) {
        if (lambda(i) > 1e-8 * lmax) ++rank;
    }
    if (rank > d) {
        throw Infeasible("target Gram has rank " + std::to_string(rank) + " > d=" + std::to_string(d));
    }

    // Eigenvalues at rounding level are zeroed; their square roots would pose as real directions.
    const double floor = 1e-12 * lmax;
    const Vector root = lambda.unaryExpr([floor](double x) { return x > floor ? std::sqrt(x) : 0.0; });
    const Matrix& u = es.eigenvectors();
    Matrix factor;
    if (d >= v) {
        // Symmetric square root, embedded in d dimensions through a random isometry.
        const Matrix sym = u * root.asDiagonal() * u.transpose();
        factor = orthonormal_embeddings(static_cast<std::uint32_t>(v), d, rng) * sym;
    } else {
        const Matrix top = root.tail(d).asDiagonal() * u.rightCols(d).transpose();
        Eigen::HouseholderQR<Matrix> qr(gaussian_matrix(d, d, 1.0, rng));
        const Matrix rot = qr.householderQ();
        factor = rot * top;
    }
    return factor;
}

int numerical_rank(const Matrix& mat, double rel_tol) {
    if (mat.size() == 0) return 0;
    Eigen::BDCSVD<Matrix> svd(mat);
    const Vector& s = svd.singularValues();
    if (s.size() == 0 || s(0) == 0.0) return 0;
    int r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) > rel_tol * s(0)) ++r;
    }
    return r;
}

std::uint64_t theorem_bound_L(int m, double beta, double epsilon, std::size_t neighborhood_size) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw InvalidInput("epsilon must lie in (0, 1)");
    if (m < 3) throw InvalidInput("bound requires m >= 3");
    if (!(beta > 0.0)) throw InvalidInput("beta must be positive");
    const long double lb = beta;
    const long double gap = std::exp(-1.0L / lb) - std::exp(-2.0L / lb);
    const long double m2 = static_cast<long double>(m) * m;
    const long double first = 100.0L * m2 * std::log(3.0L / static_cast<long double>(epsilon)) / (gap * gap);
    const long double second = 80.0L * m2 * static_cast<long double>(neighborhood_size) / (gap * gap);
    return static_cast<std::uint64_t>(std::ceil(std::max(first, second)));
}

ModelParams build_hypothetical_model(int m, int d, Pcg32& rng, NeighborhoodKind kind) {
    ModelParams p = ModelParams::zeros(m, d, d);
    p.W_E = orthonormal_embeddings(p.vocab(), d, rng);
    p.W_V = construct_value_matrix(p.W_E, kind, m);
    return p;
}

}  // namespace lca
