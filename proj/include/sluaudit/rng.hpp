#pragma once

#include <cstdint>

namespace sluaudit {

// SplitMix64: the portable generator behind every synthetic fixture, chosen
// so cohorts can be regenerated bit-for-bit from any implementation of the
// same update equations:
//
//   state  <- state + 0x9E3779B97F4A7C15
//   z      <- state
//   z      <- (z XOR (z >> 30)) * 0xBF58476D1CE4E5B9
//   z      <- (z XOR (z >> 27)) * 0x94D049BB133111EB
//   output <- z XOR (z >> 31)
//
// uniform() maps the top 53 bits onto [0,1): (output >> 11) * 2^-53.
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

    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Bernoulli draw with the documented boundary rule: success iff u < p.
    bool bernoulli(double p) { return uniform() < p; }

private:
    std::uint64_t state_;
};

}  // namespace sluaudit
