#pragma once

#include <cstdint>
#include <cmath>
#include <random>

namespace loopgraph {

/// Deterministic random source. The mt19937 engine output is pinned by the
/// standard; the uniform/normal mappings are hand-rolled here because the
/// standard distributions are implementation-defined, and we promise
/// bit-identical streams for a given seed.
class Rng {
public:
    explicit Rng(uint64_t seed, uint64_t stream = 0) {
        std::seed_seq seq{static_cast<uint32_t>(seed & 0xffffffffu),
                          static_cast<uint32_t>(seed >> 32),
                          static_cast<uint32_t>(stream & 0xffffffffu),
                          static_cast<uint32_t>(stream >> 32)};
        engine_.seed(seq);
    }

    uint32_t next_u32() { return engine_(); }

    /// Uniform in [0, n). Modulo bias is negligible for the small n used here.
    uint32_t uniform_u32(uint32_t n) { return n ? engine_() % n : 0; }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() {
        const uint64_t hi = engine_() >> 5;  // 27 bits
        const uint64_t lo = engine_() >> 6;  // 26 bits
        return ((hi << 26) | lo) * (1.0 / 9007199254740992.0);
    }

    /// Zero-mean Gaussian via Box-Muller (cached spare).
    double normal(double sigma) {
        if (have_spare_) {
            have_spare_ = false;
            return spare_ * sigma;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a) * sigma;
    }

private:
    std::mt19937 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace loopgraph
