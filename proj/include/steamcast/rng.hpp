#pragma once

#include <cmath>
#include <cstdint>

#include "steamcast/common.hpp"

namespace steamcast {

// SplitMix64 finalizer. Used both as the generator step and as the mixing
// function for deriving independent streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic RNG with a pinned bit-level contract: identical seeds give
// identical draws on every platform (std:: distributions do not).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    // [0, 1) with 53 bits of mantissa
    real uniform() { return static_cast<real>(next_u64() >> 11) * 0x1.0p-53; }

    // [0, n) without modulo bias (Lemire reduction)
    int uniform_int(int n) {
        return static_cast<int>((static_cast<unsigned __int128>(next_u64()) *
                                 static_cast<std::uint64_t>(n)) >>
                                64);
    }

    // Standard normal via Box-Muller; the second value of each pair is cached.
    real normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        real u1 = uniform();
        real u2 = uniform();
        real r = std::sqrt(-2.0 * std::log1p(-u1));  // log(1-u1), u1 < 1
        real a = 2.0 * M_PI * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

private:
    std::uint64_t state_;
    real cached_ = 0.0;
    bool have_cached_ = false;
};

// Stream-splitting rule used everywhere a root seed fans out into
// independent streams (per sample, per patch, per frame):
//   seed' = mix(mix(mix(root), a), b)
// where mix feeds the accumulated value back through the SplitMix64
// finalizer. Deterministic and collision-resistant for our scales.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t s = root;
    std::uint64_t h = splitmix64(s);
    s = h ^ a;
    h = splitmix64(s);
    s = h ^ b;
    return splitmix64(s);
}

inline Rng derive_stream(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0) {
    return Rng(derive_seed(root, a, b));
}

}  // namespace steamcast
