#pragma once

// Seeded voltage noise for synthetic twins.
//
// Generator: SplitMix64 (Steele, Lea, Flood 2014) with a single 64-bit state.
//   state += 0x9E3779B97F4A7C15
//   z = state
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   return z ^ (z >> 31)
// A uniform double in [0, 1) takes the top 53 bits: (z >> 11) * 2^-53.
// Voltage noise is (2u - 1) * amplitude, one draw per sample in time order.

#include <cstdint>

namespace flowobs {

class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform on [-amplitude, amplitude).
    double symmetric(double amplitude) { return (2.0 * uniform01() - 1.0) * amplitude; }

private:
    std::uint64_t state_;
};

}  // namespace flowobs
