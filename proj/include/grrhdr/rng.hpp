#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace grrhdr {

// Deterministic random source used wherever randomness appears.
// mt19937_64 has a pinned algorithm in the standard. The bounded draw
// and the gaussian below deliberately avoid std::uniform_int_distribution
// and std::normal_distribution, whose outputs are implementation-defined,
// so every stream is reproducible across platforms and compilers.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next() { return engine_(); }

    // Unbiased draw in [0, bound) by rejection.
    uint64_t below(uint64_t bound) {
        if (bound == 0) return 0;
        const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        uint64_t r;
        do {
            r = engine_();
        } while (r >= limit);
        return r % bound;
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller. Consumes two uniforms per call;
    // the sine branch is discarded to keep the stream layout simple.
    double gaussian() {
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log1p(-u1));
        return r * std::cos(2.0 * M_PI * u2);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace grrhdr
