#pragma once

#include <cstdint>
#include <random>

namespace probemb {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Derives independent stream seeds from a run seed
/// plus a stream index (row, epoch, ...), so results do not depend on the
/// order in which streams are consumed.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
    return Rng(mix_seed(seed, stream));
}

/// Beta(alpha, beta) via the ratio of two gamma draws.
inline double sample_beta(Rng& rng, double alpha, double beta) {
    std::gamma_distribution<double> ga(alpha, 1.0);
    std::gamma_distribution<double> gb(beta, 1.0);
    const double x = ga(rng);
    const double y = gb(rng);
    return x / (x + y);
}

}  // namespace probemb
