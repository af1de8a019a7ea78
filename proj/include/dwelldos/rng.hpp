#pragma once

#include <cstdint>

namespace dwelldos {

/// xorshift64* generator (Marsaglia shifts 12/25/27, Vigna multiplier
/// 0x2545F4914F6CDD1D). The seed is passed once through splitmix64 so that
/// small or zero seeds still give a nonzero, well-mixed state. Output is
/// fully specified by the seed on every platform.
class XorShift64Star {
public:
    explicit XorShift64Star(std::uint64_t seed) : state_(splitmix64(seed)) {
        if (state_ == 0) state_ = 0x9E3779B97F4A7C15ull;
    }

    std::uint64_t next() {
        state_ ^= state_ >> 12;
        state_ ^= state_ << 25;
        state_ ^= state_ >> 27;
        return state_ * 0x2545F4914F6CDD1Dull;
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

private:
    static std::uint64_t splitmix64(std::uint64_t x) {
        x += 0x9E3779B97F4A7C15ull;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
        return x ^ (x >> 31);
    }

    std::uint64_t state_;
};

}  // namespace dwelldos
