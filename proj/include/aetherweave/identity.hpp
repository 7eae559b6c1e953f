#pragma once

// Identity derivation from a master secret and the simulated signature
// scheme. Signatures are keyed hashes; verification looks up the signing key
// in a KeyDirectory owned by the simulation.

#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <unordered_map>

#include "aetherweave/bytes.hpp"
#include "aetherweave/field.hpp"
#include "aetherweave/hash.hpp"

namespace aetherweave {

using MasterSecret = FixedBytes<32>;
using Signature = Digest;

inline FieldElement hash_stake_secret(const MasterSecret& sk) {
    return FieldElement::from_bytes(hash_bytes(Domain::stake_secret, sk.view()).view());
}

inline Digest hash_stake_id(FieldElement stake_sk) {
    return Hasher(Domain::stake_id).update_u64(stake_sk.value()).finish();
}

/// The per-round slope a = H_share(sk, round), reduced into the field.
inline FieldElement hash_share_slope(const MasterSecret& sk, std::int64_t round) {
    auto d = Hasher(Domain::share_slope).update(sk).update_u64(static_cast<std::uint64_t>(round)).finish();
    return FieldElement::from_bytes(d.view());
}

struct KeyMaterial {
    MasterSecret sk;
    Digest net_sk;
    Digest net_pk;
    FieldElement stake_sk;
    Digest stake_id;

    friend bool operator==(const KeyMaterial&, const KeyMaterial&) = default;
};

inline KeyMaterial derive_identity(const MasterSecret& sk) {
    KeyMaterial km;
    km.sk = sk;
    km.net_sk = hash_bytes(Domain::net_secret, sk.view());
    km.net_pk = hash_bytes(Domain::net_public, km.net_sk.view());
    km.stake_sk = hash_stake_secret(sk);
    km.stake_id = hash_stake_id(km.stake_sk);
    return km;
}

inline Signature sign(const Digest& net_sk, ByteView message) {
    return Hasher(Domain::signature).update(net_sk).update(message).finish();
}

/// Append-only registry of identities known to the simulation. Plays the
/// part of public-key verification for signatures and of the relation
/// checker for stake and share attestations.
class KeyDirectory {
public:
    void add(const KeyMaterial& km) {
        std::unique_lock lock(mu_);
        keys_.emplace(km.net_pk, km);
    }

    const KeyMaterial* find(const Digest& net_pk) const {
        std::shared_lock lock(mu_);
        auto it = keys_.find(net_pk);
        return it == keys_.end() ? nullptr : &it->second;
    }

    std::size_t size() const {
        std::shared_lock lock(mu_);
        return keys_.size();
    }

private:
    mutable std::shared_mutex mu_;
    // Node-based map: pointers returned by find() stay valid across inserts.
    std::unordered_map<Digest, KeyMaterial, DigestHash> keys_;
};

inline bool check_sig(const KeyDirectory& dir, const Digest& net_pk, ByteView message, const Signature& sig) {
    const KeyMaterial* km = dir.find(net_pk);
    if (km == nullptr) return false;
    return sign(km->net_sk, message) == sig;
}

}  // namespace aetherweave
