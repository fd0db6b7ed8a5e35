#pragma once

#include <span>
#include <string>
#include <vector>

#include "lca/training.hpp"

namespace lca {

ModelParams replace_value_matrix(const ModelParams& params, const Matrix& candidate);

/// Truncated-SVD reconstruction of rank r (Frobenius-optimal).
Matrix low_rank(const Matrix& mat, int r);
/// Leading r left singular vectors (orthonormal basis of the rank-r column space).
Matrix low_rank_basis(const Matrix& mat, int r);

struct AngleReport {
    std::vector<double> angles;  // radians, ascending
    int rank = 0;                // number of angles reported
    bool reduced = false;        // an input had rank below the requested r
};

/// Principal angles between the column spaces of a and b, each truncated to
/// rank r (r <= 0 uses the full numerical rank). Small angles are taken from
/// sines and large ones from cosines to keep both ends accurate.
AngleReport principal_angles(const Matrix& a, const Matrix& b, int r = 0);

struct HammingRow {
    int distance = 0;
    double mean_inner = 0.0;
    double std_inner = 0.0;
    std::size_t count = 0;
};

struct HammingFit {
    std::vector<HammingRow> rows;  // distance 0 (diagonal) to m
    double slope = 0.0;            // least squares over off-diagonal means, equals -a
    double a = 0.0;
    double b = 0.0;                // off-diagonal intercept
    double b0 = 0.0;               // diagonal mean
    double correlation = 0.0;      // Pearson r of (distance, mean) over distances 1..m
};

HammingFit hamming_fit(const Matrix& embeddings);

/// Singular values, descending.
Vector spectrum(const Matrix& mat);

struct ClusterAttention {
    int clusters = 0;
    Matrix mean_attention;   // (query cluster, key cluster) mean per-position weight
    Matrix position_counts;  // number of positions in each bucket
    Matrix heat;             // V x V, (last token, key token) mean per-position weight
    double same_cluster_mean = 0.0;
    double cross_cluster_mean = 0.0;
};

ClusterAttention attention_cluster_stats(const ModelParams& params, const TaskConfig& task, int n, Pcg32& rng);

struct HijackPoint {
    double p_m = 0.0;
    double acc_true = 0.0;
    double acc_false = 0.0;
};

/// Every grid point replays the same random stream (common random numbers),
/// so contexts and targets are shared across mixing rates.
std::vector<HijackPoint> hijack_curve(const ModelParams& params, const TaskConfig& task, std::span<const double> grid, int n,
                                      const Pcg32& rng);

struct LengthPoint {
    int context_len = 0;
    int d = 0;
    double accuracy = 0.0;
};

/// One trained model per (L, d); all runs share the seed.
std::vector<LengthPoint> length_sweep(const TaskConfig& task, std::span<const int> lengths, std::span<const int> dims,
                                      const ModelConfig& model, const TrainConfig& cfg, std::uint64_t seed);

struct CandidateAccuracy {
    std::string candidate;
    double accuracy = 0.0;
};

/// Accuracy of the model with W_V replaced by: itself ("trained"), the
/// associative construction from its own W_E ("constructed"), the random-pair
/// control ("random") and the identity ("identity"). All candidates share one eval set.
std::vector<CandidateAccuracy> replacement_study(const ModelParams& params, const TaskConfig& task, int n, std::uint64_t seed);

struct CandidateAngles {
    std::string candidate;
    AngleReport report;
    double mean_angle = 0.0;
};

/// Principal angles between rank-r approximations of the trained W_V and the
/// constructed, random-control and Gaussian-initialized value matrices.
std::vector<CandidateAngles> angle_study(const ModelParams& params, NeighborhoodKind kind, int r, double init_scale,
                                         std::uint64_t seed);

double pearson(std::span<const double> x, std::span<const double> y);
/// Pearson correlation of average ranks.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace lca
