#pragma once

#include <cstdint>
#include <random>

namespace shapefit {

/// Deterministic uniform RNG. Doubles are built from raw mt19937_64 output
/// instead of std::uniform_real_distribution, whose mapping is
/// implementation-defined; this stream is reproducible across compilers.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

private:
    std::mt19937_64 gen_;
};

} // namespace shapefit
