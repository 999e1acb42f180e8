#pragma once

#include <cmath>
#include <cstdint>

namespace gbmseg {

// Deterministic 64-bit generator, identical on every platform.
//
// Algorithm: splitmix64 (Steele, Lea, Flood 2014) seeds an xorshift64* stream.
// State transitions use only fixed-width unsigned arithmetic, so a given seed
// yields the same draw sequence everywhere.
class RngState {
public:
    explicit RngState(std::uint64_t seed = 0) {
        base_ = splitmix(seed + 0x9E3779B97F4A7C15ULL);
        state_ = base_ != 0 ? base_ : 0x106689D45497FDB5ULL;
    }

    std::uint64_t next_u64() {
        std::uint64_t x = state_;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state_ = x;
        return x * 0x2545F4914F6CDD1DULL;
    }

    // Uniform in [0,1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    // Standard normal via Box-Muller. Always consumes exactly two uniforms so
    // the draw count per call is fixed.
    double normal() {
        double u1 = uniform01();
        double u2 = uniform01();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    // Index in [0, n).
    std::uint64_t below(std::uint64_t n) {
        return n == 0 ? 0 : next_u64() % n;
    }

    // Independent child stream for (this seed, stream id). The id is mixed
    // through splitmix64, so child k does not depend on how many other
    // children are ever derived.
    RngState derive(std::uint64_t stream) const {
        RngState child(0);
        child.base_ = splitmix(base_ ^ splitmix(stream + 0xA0761D6478BD642FULL));
        child.state_ = child.base_ != 0 ? child.base_ : 0x106689D45497FDB5ULL;
        return child;
    }

private:
    static std::uint64_t splitmix(std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t base_ = 1;
    std::uint64_t state_ = 1;
};

} // namespace gbmseg
