#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "oodnorm/errors.hpp"

namespace oodnorm {

/// SplitMix64 finalizer; used to derive independent stream seeds from a base seed.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a = 0, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
    std::uint64_t s = mix64(base);
    s = mix64(s ^ (a + 0x100000001b3ULL));
    s = mix64(s ^ (b + 0xcbf29ce484222325ULL));
    s = mix64(s ^ (c + 0x2545f4914f6cdd1dULL));
    return s;
}

/// Deterministic RNG: fixed engine plus hand-rolled transforms so streams do not
/// depend on standard-library distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    /// Uniform on the open interval (0, 1); 53-bit resolution, never returns 0 or 1.
    double uniform01() { return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via the basic trigonometric pair transform; one value per call.
    double normal() {
        const double u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Uniform integer in [0, n) by rejection, so the draw is exactly uniform.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw ConfigError("Rng::below: n must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return x % n;
    }

    /// First k entries of a uniformly random permutation of [0, pool) with `exclude`
    /// removed (pass pool for "exclude nothing"). Partial Fisher-Yates, so draws with
    /// the same seed and a smaller k are a prefix of draws with a larger k.
    std::vector<std::size_t> draw_without_replacement(std::size_t pool, std::size_t k,
                                                      std::size_t exclude) {
        std::vector<std::size_t> idx;
        idx.reserve(pool);
        for (std::size_t i = 0; i < pool; ++i)
            if (i != exclude) idx.push_back(i);
        if (k > idx.size())
            throw DataError("draw_without_replacement: pool too small (" +
                            std::to_string(idx.size()) + " available, " + std::to_string(k) +
                            " requested)");
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(below(idx.size() - i));
            std::swap(idx[i], idx[j]);
        }
        idx.resize(k);
        return idx;
    }

private:
    std::mt19937_64 eng_;
};

} // namespace oodnorm
