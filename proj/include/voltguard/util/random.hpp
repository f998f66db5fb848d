#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace voltguard {

using Rng = std::mt19937_64;

/// SplitMix64 finaliser; used to derive independent child seeds from one root seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t child_seed(std::uint64_t root, std::uint64_t stream) noexcept {
    return mix_seed(mix_seed(root) ^ (stream * 0xd1b54a32d192ed03ULL));
}

/// Uniform in [0, 1) from the top 53 bits; stable across standard libraries.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

/// Box-Muller standard normal, stable across standard libraries.
inline double standard_normal(Rng& rng) {
    constexpr double two_pi = 6.283185307179586476925286766559;
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

}  // namespace voltguard
