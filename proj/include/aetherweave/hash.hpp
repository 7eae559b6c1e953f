#pragma once

// SHA-256 with domain separation. Every protocol hash (H_stake, H_id,
// H_share, key derivation, signatures, Merkle nodes, attestation tags) is a
// member of this one family, distinguished by a one-byte domain tag.

#ifndef OPENSSL_SUPPRESS_DEPRECATED
#define OPENSSL_SUPPRESS_DEPRECATED
#endif
#include <openssl/sha.h>

#include <cstdint>
#include <string_view>

#include "aetherweave/bytes.hpp"

namespace aetherweave {

enum class Domain : std::uint8_t {
    merkle_leaf = 0x00,
    merkle_node = 0x01,
    stake_secret = 0x10,
    stake_id = 0x11,
    share_slope = 0x12,
    net_secret = 0x20,
    net_public = 0x21,
    signature = 0x22,
    stake_binding = 0x30,
    share_binding = 0x31,
    address = 0x40,
    generic = 0x7f,
};

class Hasher {
public:
    explicit Hasher(Domain domain) {
        SHA256_Init(&ctx_);
        auto tag = static_cast<std::uint8_t>(domain);
        SHA256_Update(&ctx_, &tag, 1);
    }

    Hasher& update(ByteView b) {
        SHA256_Update(&ctx_, b.data(), b.size());
        return *this;
    }
    template <std::size_t N>
    Hasher& update(const FixedBytes<N>& b) {
        return update(b.view());
    }
    Hasher& update_u64(std::uint64_t v) {
        std::uint8_t be[8];
        for (int i = 0; i < 8; ++i) be[i] = static_cast<std::uint8_t>(v >> (56 - 8 * i));
        return update(ByteView{be, 8});
    }

    Digest finish() {
        Digest out;
        SHA256_Final(out.data.data(), &ctx_);
        return out;
    }

private:
    SHA256_CTX ctx_{};
};

inline Digest hash_bytes(Domain domain, ByteView b) { return Hasher(domain).update(b).finish(); }

inline Digest hash_pair(Domain domain, const Digest& a, const Digest& b) {
    return Hasher(domain).update(a).update(b).finish();
}

}  // namespace aetherweave
