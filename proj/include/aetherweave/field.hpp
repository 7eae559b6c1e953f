#pragma once

#include <cstdint>
#include <stdexcept>

#include "aetherweave/bytes.hpp"

namespace aetherweave {

/// Element of the prime field F_Q. Q must be prime and below 2^63 so that
/// sums fit in 64 bits and products fit in 128.
template <std::uint64_t Q>
class PrimeField {
    static_assert(Q > 2 && Q < (std::uint64_t{1} << 63));

public:
    static constexpr std::uint64_t modulus = Q;

    constexpr PrimeField() = default;
    constexpr explicit PrimeField(std::uint64_t v) : v_(v % Q) {}

    constexpr std::uint64_t value() const noexcept { return v_; }
    constexpr bool is_zero() const noexcept { return v_ == 0; }

    friend constexpr PrimeField operator+(PrimeField a, PrimeField b) noexcept {
        std::uint64_t s = a.v_ + b.v_;
        return raw(s >= Q ? s - Q : s);
    }
    friend constexpr PrimeField operator-(PrimeField a, PrimeField b) noexcept {
        return raw(a.v_ >= b.v_ ? a.v_ - b.v_ : a.v_ + Q - b.v_);
    }
    friend constexpr PrimeField operator*(PrimeField a, PrimeField b) noexcept {
        return raw(reduce(static_cast<unsigned __int128>(a.v_) * b.v_));
    }
    constexpr PrimeField operator-() const noexcept { return raw(v_ == 0 ? 0 : Q - v_); }

    constexpr PrimeField pow(std::uint64_t e) const noexcept {
        PrimeField base = *this, acc = raw(1);
        while (e) {
            if (e & 1) acc = acc * base;
            base = base * base;
            e >>= 1;
        }
        return acc;
    }

    /// Multiplicative inverse; throws std::domain_error for zero.
    constexpr PrimeField inverse() const {
        if (v_ == 0) throw std::domain_error("inverse of zero field element");
        return pow(Q - 2);
    }

    friend constexpr PrimeField operator/(PrimeField a, PrimeField b) { return a * b.inverse(); }

    friend constexpr bool operator==(PrimeField, PrimeField) = default;

    /// Interprets `bytes` as a big-endian integer and reduces it mod Q.
    static PrimeField from_bytes(ByteView bytes) noexcept {
        PrimeField acc;
        const PrimeField radix(256);
        for (auto b : bytes) acc = acc * radix + PrimeField(b);
        return acc;
    }

private:
    static constexpr PrimeField raw(std::uint64_t v) noexcept {
        PrimeField f;
        f.v_ = v;
        return f;
    }

    static constexpr std::uint64_t reduce(unsigned __int128 x) noexcept {
        if constexpr (Q == (std::uint64_t{1} << 61) - 1) {
            // Mersenne reduction: 2^61 == 1 (mod Q).
            std::uint64_t lo = static_cast<std::uint64_t>(x) & Q;
            std::uint64_t hi = static_cast<std::uint64_t>(x >> 61);
            std::uint64_t s = lo + hi;
            s = (s & Q) + (s >> 61);
            return s >= Q ? s - Q : s;
        } else {
            return static_cast<std::uint64_t>(x % Q);
        }
    }

    std::uint64_t v_ = 0;
};

inline constexpr std::uint64_t kFieldModulus = (std::uint64_t{1} << 61) - 1;

/// The protocol field: q = 2^61 - 1.
using FieldElement = PrimeField<kFieldModulus>;

}  // namespace aetherweave
