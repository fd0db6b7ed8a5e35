#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lca/rng.hpp"

namespace lca {

/// Hard cap on latent dimension; tables are built by full enumeration of 2^m tokens.
inline constexpr int kMaxLatentBits = 16;

struct Token {
    std::uint32_t id{};
    auto operator<=>(const Token&) const = default;
};

using Context = std::vector<Token>;

/// m binary latent variables, z_1 first.
struct LatentVector {
    std::vector<std::uint8_t> bits;
    bool operator==(const LatentVector&) const = default;
};

enum class NeighborhoodKind { Full, OneHamming, ClusterFirstBit, ClusterFirstTwoBits };

std::string_view to_string(NeighborhoodKind kind);
NeighborhoodKind parse_neighborhood(std::string_view name);
bool is_cluster_kind(NeighborhoodKind kind);

struct TaskConfig {
    int m = 5;
    double omega = 0.5;
    double beta = 1.0;
    int context_len = 256;
    NeighborhoodKind neighborhood = NeighborhoodKind::Full;
    std::uint64_t seed = 0;

    std::uint32_t vocab() const { return 1u << m; }
    /// Throws ConfigError on an invalid combination.
    void validate() const;
};

struct Sample {
    Context context;
    Token target;
};

/// A context spliced from two independently drawn contexts (synthetic hijack).
struct MixedSample {
    Sample sample;  // sample.target is the true target
    Token true_target;
    Token false_target;
    std::vector<std::uint8_t> from_false;  // 1 where the position came from the false context
};

/// MSB-first: z_1 is the most significant bit.
Token tokenize(const LatentVector& z, int m);
LatentVector detokenize(Token t, int m);

int hamming(Token a, Token b);

bool in_neighborhood(NeighborhoodKind kind, int m, Token center, Token t);
std::vector<Token> neighborhood(NeighborhoodKind kind, int m, Token center);
/// Members of the neighborhood at Hamming distance exactly one.
std::vector<Token> one_hamming_neighborhood(NeighborhoodKind kind, int m, Token center);
/// |N(t)|; identical for every token under all supported kinds.
std::size_t neighborhood_size(NeighborhoodKind kind, int m);

/// Cluster index of a token (first bit, or first two bits); 0 for non-cluster kinds.
int cluster_of(NeighborhoodKind kind, int m, Token t);
int cluster_count(NeighborhoodKind kind);

/// pi(z | z*): Boltzmann weights exp(-D_H / beta) restricted to the neighborhood.
std::vector<double> informative_probs(Token target, const TaskConfig& cfg);
/// omega * pi + (1 - omega) * Unif over all 2^m tokens (z* included).
std::vector<double> mixture_probs(Token target, const TaskConfig& cfg);

/// Sampler with per-target cumulative tables precomputed once.
class TaskSampler {
public:
    explicit TaskSampler(TaskConfig cfg);

    const TaskConfig& config() const { return cfg_; }

    Sample sample(Pcg32& rng) const;
    Sample sample_for_target(Token target, Pcg32& rng) const;
    MixedSample sample_mixed(double p_m, Pcg32& rng) const;

    Token draw_mixture(Token target, Pcg32& rng) const;
    Token draw_informative(Token target, Pcg32& rng) const;

private:
    TaskConfig cfg_;
    std::uint32_t vocab_;
    std::vector<double> mixture_cdf_;      // vocab x vocab, row per target
    std::vector<double> informative_cdf_;  // vocab x vocab, row per target
};

Sample sample(const TaskConfig& cfg, Pcg32& rng);
MixedSample sample_mixed(const TaskConfig& cfg, double p_m, Pcg32& rng);

}  // namespace lca
