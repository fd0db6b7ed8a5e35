#include "lca/rng.hpp"

#include <cmath>
#include <numbers>

namespace lca {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Pcg32::Pcg32(std::uint64_t seed, std::uint64_t stream) {
    state_ = 0;
    inc_ = (stream << 1u) | 1u;
    next_u32();
    state_ += seed;
    next_u32();
}

Pcg32 Pcg32::derive(std::uint64_t seed, std::uint64_t stream) {
    const std::uint64_t s = splitmix64(seed ^ splitmix64(stream));
    return Pcg32(s, splitmix64(s ^ stream));
}

Pcg32 Pcg32::split() {
    const std::uint64_t s = next_u64();
    const std::uint64_t stream = next_u64();
    return Pcg32(s, stream);
}

std::uint32_t Pcg32::next_u32() {
    const std::uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    const auto rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
}

std::uint64_t Pcg32::next_u64() {
    const std::uint64_t hi = next_u32();
    return (hi << 32u) | next_u32();
}

double Pcg32::uniform() {
    return static_cast<double>(next_u64() >> 11u) * 0x1.0p-53;
}

std::uint64_t Pcg32::below(std::uint64_t n) {
    // Rejection on the top of the range keeps the result unbiased.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
}

double Pcg32::normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace lca
