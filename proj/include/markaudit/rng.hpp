#pragma once

// Deterministic random sampling helpers.
//
// std::mt19937_64 is pinned bit-for-bit by the standard, but the standard
// *distributions* are not: libstdc++ and libc++ turn the same engine stream
// into different variates. Every sampling path in this library goes through
// the fully specified helpers below so that a fixed seed reproduces the same
// output on any conforming platform.

#include <cstdint>
#include <random>
#include <vector>

namespace markaudit {

using rng64 = std::mt19937_64;

/// Stream seed for sub-task `index` (bootstrap resample, per-cell generator).
/// XOR keeps streams disjoint for index < 2^64 while staying trivially
/// reproducible by third parties.
inline std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t index) {
    return seed ^ index;
}

/// Uniform integer in [0, n), n >= 1, by rejection sampling (no modulo bias).
inline std::uint64_t uniform_below(rng64& rng, std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - ~std::uint64_t{0} % n;
    std::uint64_t draw;
    do {
        draw = rng();
    } while (draw >= limit);
    return draw % n;
}

/// Uniform double in [0, 1) with 53 random bits, the canonical ldexp mapping.
inline double uniform_double(rng64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// True with probability p.
inline bool bernoulli(rng64& rng, double p) {
    return uniform_double(rng) < p;
}

/// In-place Fisher-Yates shuffle driven by uniform_below (std::shuffle is
/// not reproducible across standard libraries).
template <typename T>
inline void shuffle(std::vector<T>& v, rng64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(uniform_below(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace markaudit
