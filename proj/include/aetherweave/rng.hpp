#pragma once

// Counter-based random streams. Every consumer derives its own stream from
// (root seed, tags...), so results never depend on the order in which
// streams are created or on how work is split across threads.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>

#include "aetherweave/bytes.hpp"
#include "aetherweave/prng.hpp"

namespace aetherweave {

/// Mixes a root seed with a list of tags into a 64-bit stream key.
inline std::uint64_t stream_key(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) noexcept {
    std::uint64_t h = detail::fmix64(seed ^ 0x9e3779b97f4a7c15ULL);
    for (std::uint64_t t : tags) h = detail::fmix64(h ^ detail::fmix64(t + 0x632be59bd9b4e019ULL));
    return h;
}

/// SplitMix64 generator; satisfies UniformRandomBitGenerator.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t state = 0) noexcept : state_(state) {}
    Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) noexcept : state_(stream_key(seed, tags)) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [lo, hi] (inclusive), unbiased.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept {
        const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
        if (range == 0) return static_cast<std::int64_t>((*this)());
        const std::uint64_t limit = max() - max() % range;
        std::uint64_t x;
        do x = (*this)();
        while (x >= limit);
        return lo + static_cast<std::int64_t>(x % range);
    }

    bool bernoulli(double p) noexcept { return uniform() < p; }

    template <std::size_t N>
    FixedBytes<N> bytes() noexcept {
        FixedBytes<N> out;
        for (std::size_t i = 0; i < N; i += 8) {
            std::uint64_t w = (*this)();
            for (std::size_t j = 0; j < 8 && i + j < N; ++j) out.data[i + j] = static_cast<std::uint8_t>(w >> (8 * j));
        }
        return out;
    }

private:
    std::uint64_t state_;
};

}  // namespace aetherweave
