#pragma once

#include <cstdint>
#include <limits>

namespace lca {

/// PCG-XSH-RR 64/32 generator (O'Neill, 2014) with selectable stream.
///
/// Satisfies std::uniform_random_bit_generator, but the project draws all
/// variates through the member helpers so results do not depend on the
/// standard library's distribution implementations.
class Pcg32 {
public:
    using result_type = std::uint32_t;

    struct State {
        std::uint64_t state{};
        std::uint64_t inc{};
        bool operator==(const State&) const = default;
    };

    explicit Pcg32(std::uint64_t seed = 0x853c49e6748fea9bULL, std::uint64_t stream = 0xda3e39cb94b95bdbULL);

    /// Independent generator for (seed, stream); streams are decorrelated with splitmix64.
    static Pcg32 derive(std::uint64_t seed, std::uint64_t stream);

    /// Child generator seeded from this generator's output.
    Pcg32 split();

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
    result_type operator()() { return next_u32(); }

    std::uint32_t next_u32();
    std::uint64_t next_u64();

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform();
    /// Uniform integer in [0, n); n > 0.
    std::uint64_t below(std::uint64_t n);
    /// Standard normal variate (Box-Muller, no cached second value).
    double normal();
    bool bernoulli(double p) { return uniform() < p; }

    State state() const { return {state_, inc_}; }
    void set_state(const State& s) { state_ = s.state; inc_ = s.inc | 1u; }

    bool operator==(const Pcg32& other) const { return state() == other.state(); }

private:
    std::uint64_t state_{};
    std::uint64_t inc_{};
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace lca
