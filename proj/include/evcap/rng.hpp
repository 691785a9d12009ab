// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

namespace evcap {

namespace detail {

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline uint64_t rotl(uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

} // namespace detail

/// Deterministic xoshiro256** stream seeded through splitmix64. The same
/// seed yields the same sequence on every platform; no libc or standard
/// library distributions are involved anywhere downstream.
class SeededRng {
public:
    explicit SeededRng(uint64_t seed) {
        uint64_t s = seed;
        for (auto& word : state_) word = detail::splitmix64(s);
    }

    uint64_t next_u64() {
        const uint64_t result = detail::rotl(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = detail::rotl(state_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1) with 53 bits of precision.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    /// Uniform integer in [0, n). Modulo bias is negligible for the small
    /// ranges used here and keeps the stream consumption fixed.
    uint64_t below(uint64_t n) {
        if (n == 0) throw std::invalid_argument("below: n must be positive");
        return next_u64() % n;
    }

    bool bernoulli(double p) {
        return uniform01() < p;
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (size_t i = items.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::array<uint64_t, 4> state_{};
};

/// Derives an independent child seed, so one top-level seed can drive
/// several decoupled streams (features vs. events vs. shuffling).
inline uint64_t derive_seed(uint64_t seed, uint64_t stream_tag) {
    uint64_t s = seed ^ (0xA0761D6478BD642FULL * (stream_tag + 1));
    return detail::splitmix64(s);
}

/// Same, with the stream named by a label (FNV-1a hashed).
inline uint64_t derive_seed(uint64_t seed, std::string_view stream_name) {
    uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : stream_name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return derive_seed(seed, h);
}

} // namespace evcap
