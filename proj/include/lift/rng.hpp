#pragma once

#include <cmath>
#include <cstdint>

namespace lift {

// Deterministic 64-bit generator (splitmix64). Distributions are implemented
// here rather than taken from <random> so that streams are bit-identical
// across platforms and standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    bool bernoulli(double p) { return uniform01() < p; }

    // Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_below(std::uint64_t n) {
        return std::uint64_t((__uint128_t(next_u64()) * n) >> 64);
    }

    // Knuth's product-of-uniforms sampler; fine for desk-scale means.
    int poisson(double mean) {
        const double limit = std::exp(-mean);
        int k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= uniform01();
        } while (p > limit);
        return k - 1;
    }

    // Derive an independent stream keyed on the original seed, not the
    // current state, so forks are order-insensitive.
    Rng fork(std::uint64_t stream) const {
        std::uint64_t z = seed_ ^ (0xA0761D6478BD642FULL * (stream + 1));
        z = (z ^ (z >> 32)) * 0xE7037ED1A0B428DBULL;
        return Rng(z ^ (z >> 29));
    }

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::uint64_t state_;
};

}  // namespace lift
