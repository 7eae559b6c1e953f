#pragma once

// Fixed-width byte strings and the canonical big-endian encoder shared by
// every signed or hashed tuple in the protocol.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace aetherweave {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

template <std::size_t N>
struct FixedBytes {
    std::array<std::uint8_t, N> data{};

    static constexpr std::size_t size() noexcept { return N; }
    ByteView view() const noexcept { return {data.data(), N}; }

    /// Little-endian 64-bit word `i`; used for hashing into containers.
    std::uint64_t word(std::size_t i) const noexcept {
        std::uint64_t w = 0;
        std::memcpy(&w, data.data() + 8 * i, 8);
        return w;
    }

    bool is_zero() const noexcept {
        return std::all_of(data.begin(), data.end(), [](auto b) { return b == 0; });
    }

    friend bool operator==(const FixedBytes& a, const FixedBytes& b) noexcept {
        if constexpr (N % 8 == 0) {
            std::uint64_t diff = 0;
            for (std::size_t i = 0; i < N / 8; ++i) diff |= a.word(i) ^ b.word(i);
            return diff == 0;
        } else {
            return a.data == b.data;
        }
    }
    friend auto operator<=>(const FixedBytes&, const FixedBytes&) = default;
};

/// 32-byte hash output; also used for public identifiers.
using Digest = FixedBytes<32>;
/// 16-byte per-round slice nonce.
using Seed = FixedBytes<16>;

struct DigestHash {
    std::size_t operator()(const Digest& d) const noexcept {
        // Digests are uniformly distributed, so one word suffices.
        return static_cast<std::size_t>(d.word(0));
    }
};

inline std::string to_hex(ByteView bytes) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        out.push_back(kDigits[b >> 4]);
        out.push_back(kDigits[b & 0xf]);
    }
    return out;
}

template <std::size_t N>
std::string to_hex(const FixedBytes<N>& b) {
    return to_hex(b.view());
}

/// Canonical encoder: integers are fixed-width big-endian, variable-length
/// fields carry a 4-byte big-endian length prefix.
class ByteWriter {
public:
    ByteWriter& u8(std::uint8_t v) {
        buf_.push_back(v);
        return *this;
    }
    ByteWriter& u32(std::uint32_t v) {
        for (int shift = 24; shift >= 0; shift -= 8) buf_.push_back(static_cast<std::uint8_t>(v >> shift));
        return *this;
    }
    ByteWriter& u64(std::uint64_t v) {
        for (int shift = 56; shift >= 0; shift -= 8) buf_.push_back(static_cast<std::uint8_t>(v >> shift));
        return *this;
    }
    ByteWriter& i64(std::int64_t v) { return u64(static_cast<std::uint64_t>(v)); }

    template <std::size_t N>
    ByteWriter& fixed(const FixedBytes<N>& b) {
        buf_.insert(buf_.end(), b.data.begin(), b.data.end());
        return *this;
    }
    ByteWriter& var(ByteView b) {
        u32(static_cast<std::uint32_t>(b.size()));
        buf_.insert(buf_.end(), b.begin(), b.end());
        return *this;
    }
    ByteWriter& var(std::string_view s) {
        return var(ByteView{reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
    }

    const Bytes& bytes() const& noexcept { return buf_; }
    Bytes bytes() && noexcept { return std::move(buf_); }
    std::size_t size() const noexcept { return buf_.size(); }

private:
    Bytes buf_;
};

}  // namespace aetherweave

template <std::size_t N>
struct std::hash<aetherweave::FixedBytes<N>> {
    std::size_t operator()(const aetherweave::FixedBytes<N>& b) const noexcept {
        return static_cast<std::size_t>(b.word(0));
    }
};
