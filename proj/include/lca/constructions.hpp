#pragma once

#include <cstdint>

#include "lca/model.hpp"

namespace lca {

/// Target embedding geometry: <W_E(t), W_E(t)> = b0, <W_E(t), W_E(u)> = -a D_H(t, u) + b.
struct EmbeddingGeometry {
    double a = 0.0;
    double b = 0.0;
    double b0 = 1.0;
};

/// d x V matrix with orthonormal columns (thin QR of a Gaussian draw). Requires d >= V.
Matrix orthonormal_embeddings(std::uint32_t vocab, int d, Pcg32& rng);
/// d x V i.i.d. N(0, stddev^2).
Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Pcg32& rng);

/// V x V 0/1 matrix, entry (t, t') = 1 iff t' is one bit-flip from t and inside N(t).
Matrix association_matrix(NeighborhoodKind kind, int m);

/// W_V = sum_t W_E(t) (sum_{t' in N1(t)} W_E(t'))^T  =  W_E A W_E^T.
Matrix construct_value_matrix(const Matrix& embeddings, NeighborhoodKind kind, int m);

/// Control with the same number of outer-product partners per token, drawn
/// uniformly from the vocabulary with replacement.
Matrix random_value_matrix(const Matrix& embeddings, NeighborhoodKind kind, int m, Pcg32& rng);
/// The partner-count matrix used by random_value_matrix (row t counts draws of each j).
Matrix random_association_matrix(NeighborhoodKind kind, int m, Pcg32& rng);

Matrix geometry_gram(const EmbeddingGeometry& geom, int m);

/// W_E (d x V) whose Gram matrix equals geometry_gram(geom, m). Throws
/// Infeasible when the Gram is not PSD or its rank exceeds d.
Matrix geometry_embeddings(const EmbeddingGeometry& geom, int m, int d, Pcg32& rng);

/// Count of singular values above rel_tol * sigma_max.
int numerical_rank(const Matrix& mat, double rel_tol = 1e-8);

/// Smallest integer not below
///   max{100 m^2 log(3/eps), 80 m^2 |N(y)|} / (e^{-1/beta} - e^{-2/beta})^2.
/// Context lengths strictly above this value (L >= bound + 1) meet the error guarantee.
std::uint64_t theorem_bound_L(int m, double beta, double epsilon, std::size_t neighborhood_size);

/// W_K = W_Q = 0, orthonormal W_E, associative W_V. Requires d >= 2^m.
ModelParams build_hypothetical_model(int m, int d, Pcg32& rng, NeighborhoodKind kind = NeighborhoodKind::Full);

}  // namespace lca
