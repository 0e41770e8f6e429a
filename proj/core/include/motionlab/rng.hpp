#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "motionlab/hash.hpp"

namespace motionlab {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Derives an independent child seed from a base seed and a stream tag.
// Every consumer of randomness gets its own derived stream so that adding
// or reordering consumers never perturbs unrelated draws.
inline uint64_t derive_seed(uint64_t base, const std::string& tag, uint64_t index = 0) {
    uint64_t h = fnv1a64(tag);
    h = splitmix64(h ^ splitmix64(base));
    return splitmix64(h ^ (0x9e3779b97f4a7c15ull * (index + 1)));
}

// Deterministic RNG. std::mt19937_64 is bit-portable; the distributions
// below are hand-rolled because the stdlib ones are implementation-defined.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi] via rejection-free modulo of a wide draw.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(eng_() % span);
    }

    // Standard normal via Box-Muller. One value per call; the pair's twin
    // is discarded so the stream is a pure function of the draw index.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::mt19937_64 eng_;
};

}  // namespace motionlab
