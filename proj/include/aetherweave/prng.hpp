#pragma once

#include <bit>
#include <cstdint>

#include "aetherweave/bytes.hpp"

namespace aetherweave {

namespace detail {

constexpr std::uint64_t fmix64(std::uint64_t k) noexcept {
    k ^= k >> 33;
    k *= 0xff51afd7ed558ccdULL;
    k ^= k >> 33;
    k *= 0xc4ceb9fe1a85ec53ULL;
    k ^= k >> 33;
    return k;
}

}  // namespace detail

inline constexpr std::uint64_t kScoreMantissa = std::uint64_t{1} << 53;

/// An identifier folded to the two words the score function consumes.
/// Tables cache this so slice filters never touch the full identifier.
struct IdMix {
    std::uint64_t lo = 0, hi = 0;
};

inline IdMix id_mix(const Digest& id) noexcept {
    return {id.word(0) ^ std::rotl(id.word(2), 29), id.word(1) ^ std::rotl(id.word(3), 17)};
}

/// Keyed 64-bit hash of (seed || id). The seed is the key; every bit of the
/// identifier reaches the output. Identifiers are themselves digests, so
/// two mixing rounds are enough for uniform scores.
inline std::uint64_t prng_word(const Seed& seed, IdMix m) noexcept {
    return detail::fmix64(detail::fmix64(seed.word(0) ^ m.lo) ^ seed.word(1) ^ m.hi);
}

inline std::uint64_t prng_word(const Seed& seed, const Digest& id) noexcept { return prng_word(seed, id_mix(id)); }

/// Uniform score in [0, 1) with 53-bit resolution, exactly representable as
/// a double.
inline double prng_score(const Seed& seed, IdMix m) noexcept {
    return static_cast<double>(prng_word(seed, m) >> 11) / static_cast<double>(kScoreMantissa);
}

inline double prng_score(const Seed& seed, const Digest& id) noexcept { return prng_score(seed, id_mix(id)); }

}  // namespace aetherweave
