#include "lca/latent_task.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "lca/errors.hpp"

namespace lca {

namespace {

void check_token(Token t, int m) {
    if (t.id >= (1u << m)) {
        throw InvalidInput("token " + std::to_string(t.id) + " out of range for m=" + std::to_string(m));
    }
}

// Bit of z_i (1-based, MSB-first) in the token id.
std::uint32_t latent_bit(Token t, int m, int i) { return (t.id >> (m - i)) & 1u; }

std::vector<double> cumulative(std::span<const double> probs) {
    std::vector<double> cdf(probs.size());
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        cdf[i] = acc;
        if (probs[i] > 0.0) last_positive = i;
    }
    // Pin the tail to exactly 1 so every u in [0,1) lands on a positive-mass entry.
    for (std::size_t i = last_positive; i < cdf.size(); ++i) cdf[i] = 1.0;
    return cdf;
}

Token draw(std::span<const double> cdf, Pcg32& rng) {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return Token{static_cast<std::uint32_t>(it - cdf.begin())};
}

}  // namespace

std::string_view to_string(NeighborhoodKind kind) {
    switch (kind) {
        case NeighborhoodKind::Full: return "full";
        case NeighborhoodKind::OneHamming: return "one_hamming";
        case NeighborhoodKind::ClusterFirstBit: return "cluster_first_bit";
        case NeighborhoodKind::ClusterFirstTwoBits: return "cluster_first_two_bits";
    }
    return "?";
}

NeighborhoodKind parse_neighborhood(std::string_view name) {
    for (auto k : {NeighborhoodKind::Full, NeighborhoodKind::OneHamming, NeighborhoodKind::ClusterFirstBit,
                   NeighborhoodKind::ClusterFirstTwoBits}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown neighborhood kind '" + std::string(name) + "'");
}

bool is_cluster_kind(NeighborhoodKind kind) {
    return kind == NeighborhoodKind::ClusterFirstBit || kind == NeighborhoodKind::ClusterFirstTwoBits;
}

void TaskConfig::validate() const {
    if (m < 3 || m > kMaxLatentBits) {
        throw ConfigError("task.m must lie in [3, " + std::to_string(kMaxLatentBits) + "], got " + std::to_string(m));
    }
    if (!(omega >= 0.0 && omega <= 1.0)) throw ConfigError("task.omega must lie in [0, 1]");
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("task.beta must be positive and finite");
    if (context_len < 1) throw ConfigError("task.context_len must be >= 1");
}

Token tokenize(const LatentVector& z, int m) {
    if (static_cast<int>(z.bits.size()) != m) {
        throw InvalidInput("latent vector has " + std::to_string(z.bits.size()) + " bits, expected " + std::to_string(m));
    }
    std::uint32_t id = 0;
    for (auto b : z.bits) {
        if (b > 1) throw InvalidInput("latent bits must be 0 or 1");
        id = (id << 1u) | b;
    }
    return Token{id};
}

LatentVector detokenize(Token t, int m) {
    check_token(t, m);
    LatentVector z;
    z.bits.resize(static_cast<std::size_t>(m));
    for (int i = 1; i <= m; ++i) z.bits[static_cast<std::size_t>(i - 1)] = static_cast<std::uint8_t>(latent_bit(t, m, i));
    return z;
}

int hamming(Token a, Token b) { return std::popcount(a.id ^ b.id); }

bool in_neighborhood(NeighborhoodKind kind, int m, Token center, Token t) {
    if (t == center) return false;
    switch (kind) {
        case NeighborhoodKind::Full: return true;
        case NeighborhoodKind::OneHamming: return hamming(center, t) == 1;
        case NeighborhoodKind::ClusterFirstBit: return latent_bit(center, m, 1) == latent_bit(t, m, 1);
        case NeighborhoodKind::ClusterFirstTwoBits:
            return latent_bit(center, m, 1) == latent_bit(t, m, 1) && latent_bit(center, m, 2) == latent_bit(t, m, 2);
    }
    return false;
}

std::vector<Token> neighborhood(NeighborhoodKind kind, int m, Token center) {
    check_token(center, m);
    std::vector<Token> out;
    for (std::uint32_t id = 0; id < (1u << m); ++id) {
        if (in_neighborhood(kind, m, center, Token{id})) out.push_back(Token{id});
    }
    return out;
}

std::vector<Token> one_hamming_neighborhood(NeighborhoodKind kind, int m, Token center) {
    check_token(center, m);
    std::vector<Token> out;
    for (int i = 0; i < m; ++i) {
        const Token t{center.id ^ (1u << i)};
        if (in_neighborhood(kind, m, center, t)) out.push_back(t);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::size_t neighborhood_size(NeighborhoodKind kind, int m) {
    const std::size_t v = std::size_t{1} << m;
    switch (kind) {
        case NeighborhoodKind::Full: return v - 1;
        case NeighborhoodKind::OneHamming: return static_cast<std::size_t>(m);
        case NeighborhoodKind::ClusterFirstBit: return v / 2 - 1;
        case NeighborhoodKind::ClusterFirstTwoBits: return v / 4 - 1;
    }
    return 0;
}

int cluster_of(NeighborhoodKind kind, int m, Token t) {
    switch (kind) {
        case NeighborhoodKind::ClusterFirstBit: return static_cast<int>(latent_bit(t, m, 1));
        case NeighborhoodKind::ClusterFirstTwoBits:
            return static_cast<int>(latent_bit(t, m, 1) * 2 + latent_bit(t, m, 2));
        default: return 0;
    }
}

int cluster_count(NeighborhoodKind kind) {
    switch (kind) {
        case NeighborhoodKind::ClusterFirstBit: return 2;
        case NeighborhoodKind::ClusterFirstTwoBits: return 4;
        default: return 1;
    }
}

std::vector<double> informative_probs(Token target, const TaskConfig& cfg) {
    cfg.validate();
    check_token(target, cfg.m);
    const std::uint32_t v = cfg.vocab();
    std::vector<double> p(v, 0.0);
    double z = 0.0;
    for (std::uint32_t id = 0; id < v; ++id) {
        const Token t{id};
        if (!in_neighborhood(cfg.neighborhood, cfg.m, target, t)) continue;
        p[id] = std::exp(-static_cast<double>(hamming(t, target)) / cfg.beta);
        z += p[id];
    }
    if (!(z > 0.0)) throw ConfigError("empty neighborhood for token " + std::to_string(target.id));
    for (auto& x : p) x /= z;
    return p;
}

std::vector<double> mixture_probs(Token target, const TaskConfig& cfg) {
    auto p = informative_probs(target, cfg);
    const double uniform = 1.0 / static_cast<double>(cfg.vocab());
    for (auto& x : p) x = cfg.omega * x + (1.0 - cfg.omega) * uniform;
    return p;
}

TaskSampler::TaskSampler(TaskConfig cfg) : cfg_(cfg), vocab_(cfg.vocab()) {
    cfg_.validate();
    mixture_cdf_.reserve(std::size_t{vocab_} * vocab_);
    informative_cdf_.reserve(std::size_t{vocab_} * vocab_);
    for (std::uint32_t y = 0; y < vocab_; ++y) {
        const auto pi = informative_probs(Token{y}, cfg_);
        const auto mix = mixture_probs(Token{y}, cfg_);
        const auto ci = cumulative(pi);
        const auto cm = cumulative(mix);
        informative_cdf_.insert(informative_cdf_.end(), ci.begin(), ci.end());
        mixture_cdf_.insert(mixture_cdf_.end(), cm.begin(), cm.end());
    }
}

Token TaskSampler::draw_mixture(Token target, Pcg32& rng) const {
    return draw(std::span(mixture_cdf_).subspan(std::size_t{target.id} * vocab_, vocab_), rng);
}

Token TaskSampler::draw_informative(Token target, Pcg32& rng) const {
    return draw(std::span(informative_cdf_).subspan(std::size_t{target.id} * vocab_, vocab_), rng);
}

Sample TaskSampler::sample_for_target(Token target, Pcg32& rng) const {
    check_token(target, cfg_.m);
    Sample s;
    s.target = target;
    const auto len = static_cast<std::size_t>(cfg_.context_len);
    s.context.reserve(len);
    for (std::size_t l = 0; l + 1 < len; ++l) s.context.push_back(draw_mixture(target, rng));
    s.context.push_back(draw_informative(target, rng));
    return s;
}

Sample TaskSampler::sample(Pcg32& rng) const {
    const Token target{static_cast<std::uint32_t>(rng.below(vocab_))};
    return sample_for_target(target, rng);
}

MixedSample TaskSampler::sample_mixed(double p_m, Pcg32& rng) const {
    if (!(p_m >= 0.0 && p_m <= 1.0)) throw InvalidInput("mixing rate must lie in [0, 1]");
    const Token y1{static_cast<std::uint32_t>(rng.below(vocab_))};
    Token y2{static_cast<std::uint32_t>(rng.below(vocab_))};
    while (y2 == y1) y2 = Token{static_cast<std::uint32_t>(rng.below(vocab_))};

    const Sample x1 = sample_for_target(y1, rng);
    const Sample x2 = sample_for_target(y2, rng);

    MixedSample out;
    out.true_target = y1;
    out.false_target = y2;
    out.sample.target = y1;
    out.sample.context.resize(x1.context.size());
    out.from_false.resize(x1.context.size());
    for (std::size_t l = 0; l < x1.context.size(); ++l) {
        const bool take_false = rng.bernoulli(p_m);
        out.from_false[l] = take_false ? 1 : 0;
        out.sample.context[l] = take_false ? x2.context[l] : x1.context[l];
    }
    return out;
}

Sample sample(const TaskConfig& cfg, Pcg32& rng) { return TaskSampler(cfg).sample(rng); }

MixedSample sample_mixed(const TaskConfig& cfg, double p_m, Pcg32& rng) {
    return TaskSampler(cfg).sample_mixed(p_m, rng);
}

}  // namespace lca
