#pragma once

// Seedable counter-free RNG streams with a fully specified bit-level
// implementation, so that simulation output is identical across platforms,
// standard libraries, and thread counts. std::uniform_real_distribution and
// std::normal_distribution are implementation-defined and must not be used
// anywhere in this library.

#include <cmath>
#include <cstdint>
#include <string_view>

namespace quasirand {

// splitmix64 step; also used as the stable hash combiner for seed derivation.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) {
    std::uint64_t s = seed ^ (value + 0x9e3779b97f4a7c15ULL);
    return splitmix64(s);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::string_view text) {
    std::uint64_t h = seed;
    for (unsigned char c : text) h = hash_combine(h, static_cast<std::uint64_t>(c));
    return h;
}

// xoshiro256++ (Blackman & Vigna), seeded through splitmix64.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
        cached_normal_valid_ = false;
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; generates pairs, caches the second.
    double normal() {
        if (cached_normal_valid_) {
            cached_normal_valid_ = false;
            return cached_normal_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 6.283185307179586476925286766559 * u2;
        cached_normal_ = radius * std::sin(angle);
        cached_normal_valid_ = true;
        return radius * std::cos(angle);
    }

    // Derives an independent substream; deterministic in (this stream's seed, tag).
    RngStream substream(std::uint64_t tag) const {
        std::uint64_t h = state_[0];
        h = hash_combine(h, state_[1]);
        h = hash_combine(h, state_[2]);
        h = hash_combine(h, state_[3]);
        return RngStream(hash_combine(h, tag));
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4];
    double cached_normal_ = 0.0;
    bool cached_normal_valid_ = false;
};

// Seed for one replicate; order-independent across scheduling because it only
// depends on (master_seed, scenario_id, rep_index).
inline std::uint64_t replicate_seed(std::uint64_t master_seed, std::string_view scenario_id,
                                    std::uint64_t rep_index) {
    std::uint64_t h = hash_combine(master_seed, scenario_id);
    return hash_combine(h, rep_index);
}

} // namespace quasirand
