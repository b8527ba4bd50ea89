#pragma once

#include <cstdint>
#include <random>

namespace nlaslr {

using Rng = std::mt19937_64;

/// SplitMix64 finaliser; used to derive independent substream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Deterministic child generator for (seed, stream, index).
inline Rng substream(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
    return Rng(mix_seed(mix_seed(mix_seed(seed) ^ stream) ^ index));
}

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double normal(Rng& rng, double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(rng);
}

/// Beta(a, b) from two gamma variates.
inline double beta_sample(Rng& rng, double a, double b) {
    const double x = std::gamma_distribution<double>(a, 1.0)(rng);
    const double y = std::gamma_distribution<double>(b, 1.0)(rng);
    return x / (x + y);
}

}  // namespace nlaslr
