#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string_view>

namespace caseil {

// Portable deterministic RNG (xoshiro256**). The standard <random> engines are
// portable but the distributions are not, so all sampling helpers here are
// hand-rolled. Every random choice in the project flows through this type.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        // splitmix64 expansion of the seed into the full state.
        uint64_t s = seed;
        for (auto& word : state_) word = splitmix64(s);
    }

    uint64_t next() {
        const uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform integer in [0, n) without modulo bias.
    uint64_t below(uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            const uint64_t r = next();
            if (r >= threshold) return r % n;
        }
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    std::array<uint64_t, 4> state() const { return state_; }
    void set_state(const std::array<uint64_t, 4>& s) { state_ = s; }

    static uint64_t splitmix64(uint64_t& s) {
        uint64_t z = (s += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::array<uint64_t, 4> state_{};
};

// Stable mixing of two seeds into one (order-sensitive).
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t s = a ^ (0x9e3779b97f4a7c15ull + (b << 6) + (b >> 2));
    uint64_t m = Rng::splitmix64(s);
    s ^= b;
    return m ^ Rng::splitmix64(s);
}

// Named sub-stream derivation: one master seed fans out into independent
// streams for generation, training and evaluation.
inline uint64_t stream_seed(uint64_t master, std::string_view label) {
    uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
    for (const char c : label) {
        h ^= static_cast<uint8_t>(c);
        h *= 0x100000001b3ull;
    }
    return mix_seed(master, h);
}

}  // namespace caseil
