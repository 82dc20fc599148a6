// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#ifndef SPLATSEG_RNG_HPP
#define SPLATSEG_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace splatseg {

/// One step of the splitmix64 generator. Used both as a stream
/// derivation hash and to expand seeds into engine state.
inline uint64_t splitmix64(uint64_t& state)
{
    uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Derives an independent substream seed from a base seed and up to three
/// stream tags. Feeding the tags through splitmix64 sequentially keeps
/// nearby tags decorrelated.
inline uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b = 0, uint64_t c = 0)
{
    uint64_t s = base;
    uint64_t z = splitmix64(s);
    s = z ^ a;
    z = splitmix64(s);
    s = z ^ b;
    z = splitmix64(s);
    s = z ^ c;
    return splitmix64(s);
}

/// Deterministic random source. All stochastic behaviour in the library
/// flows through this class so that results are reproducible bit for bit
/// across platforms and thread counts.
class Rng {
public:
    explicit Rng(uint64_t seed)
        : mEngine(seed)
    {
    }

    uint64_t nextU64() { return mEngine(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return double(mEngine() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    int64_t uniformInt(int64_t n)
    {
        // Rejection-free modulo; the bias is negligible for the small
        // ranges used here and keeps the draw-count predictable.
        return int64_t(mEngine() % uint64_t(n));
    }

    /// Standard normal via Box-Muller; draws exactly two uniforms.
    double normal()
    {
        if (mHaveSpare) {
            mHaveSpare = false;
            return mSpare;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        mSpare = r * std::sin(theta);
        mHaveSpare = true;
        return r * std::cos(theta);
    }

    /// Fisher-Yates shuffle using uniformInt.
    template <typename T>
    void shuffle(std::vector<T>& items)
    {
        for (size_t i = items.size(); i > 1; --i) {
            size_t j = size_t(uniformInt(int64_t(i)));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 mEngine;
    bool mHaveSpare = false;
    double mSpare = 0.0;
};

} // namespace splatseg

#endif // SPLATSEG_RNG_HPP
