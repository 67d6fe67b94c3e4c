#include "attnedit/prng.hpp"

#include <cmath>
#include <stdexcept>

namespace attnedit {

namespace {

uint64_t splitmix64_next(uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Prng::Prng(uint64_t seed) {
    uint64_t state = seed;
    for (auto& word : s_) {
        word = splitmix64_next(state);
    }
    if (s_[0] == 0 && s_[1] == 0 && s_[2] == 0 && s_[3] == 0) {
        s_[0] = 1;  // xoshiro must not start from the all-zero state
    }
}

uint64_t Prng::next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Prng::next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Prng::next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

int sample_categorical(std::span<const double> probs, Prng& rng) {
    if (probs.empty()) {
        throw std::invalid_argument("sample_categorical: empty distribution");
    }
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0) || !std::isfinite(p)) {
            throw std::invalid_argument("sample_categorical: negative or non-finite probability");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
        throw std::invalid_argument("sample_categorical: probabilities sum to " + std::to_string(sum));
    }
    const double u = rng.next_double();
    double cum = 0.0;
    int last_positive = -1;
    for (size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] > 0.0) last_positive = static_cast<int>(i);
        cum += probs[i];
        if (u < cum) {
            return static_cast<int>(i);
        }
    }
    // u landed in the rounding slack past the final cumulative value.
    return last_positive >= 0 ? last_positive : static_cast<int>(probs.size()) - 1;
}

}  // namespace attnedit
