#pragma once

#include <cstdint>
#include <span>

namespace attnedit {

// xoshiro256++ seeded through splitmix64. The stream for a given seed is
// frozen: tests pin the first outputs against an independent implementation,
// and README.md documents the exact algorithm. Single-owner mutable state;
// never share one instance across threads.
class Prng {
public:
    explicit Prng(uint64_t seed);

    uint64_t next_u64();

    // Uniform in [0, 1), 53-bit resolution: (next_u64() >> 11) * 2^-53.
    double next_double();

    double next_uniform(double lo, double hi);

private:
    uint64_t s_[4];
};

// Draws an index distributed per `probs` using one uniform draw and a
// cumulative walk. Requires nonnegative entries summing to 1 within 1e-6;
// throws std::invalid_argument otherwise.
int sample_categorical(std::span<const double> probs, Prng& rng);

}  // namespace attnedit
