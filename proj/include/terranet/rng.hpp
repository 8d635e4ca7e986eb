#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace terranet {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

} // namespace detail

/// Combines a base seed with stream tags (block index, copy index, purpose
/// id, ...) into an independent seed. Used to give every parallel unit its
/// own reproducible stream regardless of scheduling.
inline std::uint64_t mix_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
    std::uint64_t s = seed;
    (void)detail::splitmix64(s);
    for (std::uint64_t t : tags) {
        s ^= t + 0x9e3779b97f4a7c15ull + (s << 6) + (s >> 2);
        (void)detail::splitmix64(s);
    }
    return s;
}

/// Deterministic pseudo-random generator (xoshiro256++ core, splitmix64
/// seeding). Hand-rolled uniform/normal transforms so that a given seed
/// produces the same stream on every platform/libc, which the
/// reproducibility guarantees rely on.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = detail::splitmix64(sm);
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

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::size_t uniform_index(std::size_t n) {
        return static_cast<std::size_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
    }

    /// Zero-mean Gaussian draw (Box-Muller, spare cached).
    double normal(double sigma = 1.0) {
        if (has_spare_) {
            has_spare_ = false;
            return spare_ * sigma;
        }
        const double u1 = 1.0 - uniform(); // (0, 1]: keep log() finite
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle) * sigma;
    }

    /// Fisher-Yates shuffle.
    template <typename Container>
    void shuffle(Container& c) {
        const std::size_t n = c.size();
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = uniform_index(i);
            std::swap(c[i - 1], c[j]);
        }
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace terranet
