#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace mfc {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based generator: every draw is a pure function of
/// (seed, key_a, key_b, counter), so streams never depend on evaluation order
/// or on how work is split across threads.
class CounterRng {
public:
    constexpr CounterRng(std::uint64_t seed, std::uint64_t key_a, std::uint64_t key_b = 0)
        : key_(mix64(mix64(mix64(seed) ^ key_a) ^ (key_b * 0xd1b54a32d192ed03ULL))) {}

    constexpr std::uint64_t bits(std::uint64_t counter) const {
        return mix64(key_ ^ mix64(counter));
    }

    /// Uniform on the open interval (0,1).
    constexpr double uniform(std::uint64_t counter) const {
        return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller on a counter domain disjoint from uniform().
    double normal(std::uint64_t counter) const {
        constexpr std::uint64_t tag = 1ULL << 63;
        const double u1 = uniform(tag | (2 * counter));
        const double u2 = uniform(tag | (2 * counter + 1));
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t key_;
};

/// Sequential view over a CounterRng.
class CounterStream {
public:
    CounterStream(std::uint64_t seed, std::uint64_t key_a, std::uint64_t key_b = 0)
        : rng_(seed, key_a, key_b) {}

    std::uint64_t next_bits() { return rng_.bits(counter_++); }
    double uniform() { return rng_.uniform(counter_++); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() { return rng_.normal(counter_++); }

    /// Uniform index in [0, n), n >= 1.
    std::uint64_t index(std::uint64_t n) {
        return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
    }

private:
    CounterRng rng_;
    std::uint64_t counter_ = 0;
};

} // namespace mfc
