#pragma once

// Canonical wire encodings. Field orders and widths are documented in
// README.md; encoded_size() mirrors encode() without materializing bytes and
// is what the simulator uses for traffic accounting.

#include <cstddef>

#include "aetherweave/bytes.hpp"
#include "aetherweave/records.hpp"

namespace aetherweave::wire {

inline void put(ByteWriter& w, const MerkleCommitment& c) { w.fixed(c.root).u64(c.size); }

inline void put(ByteWriter& w, const MerkleProof& p) {
    w.u64(p.index).u32(static_cast<std::uint32_t>(p.path.size()));
    for (const auto& d : p.path) w.fixed(d);
}

inline void put(ByteWriter& w, const StakeAttestation& a) {
    w.fixed(a.stake_id);
    put(w, a.merkle_proof);
    w.fixed(a.binding_tag);
}

inline void put(ByteWriter& w, const CommitRec& c) {
    put(w, c.req_com);
    w.u64(c.share.value()).fixed(c.share_att.binding_tag);
}

inline Bytes encode(const NetRec& r) {
    ByteWriter w;
    w.fixed(r.net_pk);
    put(w, r.stake_com);
    put(w, r.stake_att);
    w.u64(r.addr).i64(r.ts).fixed(r.sig);
    return std::move(w).bytes();
}

inline Bytes encode(const CommitRec& c) {
    ByteWriter w;
    put(w, c);
    return std::move(w).bytes();
}

inline Bytes encode(const PeerRec& p) {
    ByteWriter w;
    w.var(encode(*p.net_rec));
    w.u32(static_cast<std::uint32_t>(p.commits.size()));
    for (const auto& e : p.commits) {
        put(w, *e.rec);
        w.i64(e.round);
    }
    return std::move(w).bytes();
}

inline Bytes encode(const SlashProof& s) {
    ByteWriter w;
    w.fixed(s.net_pk);
    put(w, s.stake_com);
    w.i64(s.round);
    put(w, s.cr1);
    put(w, s.cr2);
    return std::move(w).bytes();
}

inline Bytes encode(const Request& r) {
    ByteWriter w;
    const bool seeds = r.nu && r.eta;
    w.u8(seeds ? 1 : 0);
    if (seeds) w.fixed(*r.nu).fixed(*r.eta);
    w.i64(r.round).fixed(r.nonce_sig);
    put(w, *r.commit_rec);
    w.u64(r.opening.ind);
    put(w, r.opening.proof);
    w.var(encode(*r.net_rec));
    return std::move(w).bytes();
}

inline Bytes encode(const Response& r) {
    ByteWriter w;
    w.u32(static_cast<std::uint32_t>(r.peers.size()));
    for (const auto& p : r.peers) w.var(encode(*p));
    w.u32(static_cast<std::uint32_t>(r.slash_proofs.size()));
    for (const auto& s : r.slash_proofs) w.var(encode(*s));
    return std::move(w).bytes();
}

// Sizes -----------------------------------------------------------------------

inline constexpr std::size_t kCommitmentSize = 32 + 8;
inline constexpr std::size_t kCommitRecSize = kCommitmentSize + 8 + 32;
inline constexpr std::size_t kSlashProofSize = 32 + kCommitmentSize + 8 + 2 * kCommitRecSize;

inline std::size_t proof_size(const MerkleProof& p) noexcept { return 8 + 4 + 32 * p.path.size(); }

inline std::size_t encoded_size(const NetRec& r) noexcept {
    return 32 + kCommitmentSize + (32 + proof_size(r.stake_att.merkle_proof) + 32) + 8 + 8 + 32;
}

inline std::size_t encoded_size(const PeerRec& p) noexcept {
    return 4 + encoded_size(*p.net_rec) + 4 + p.commits.size() * (kCommitRecSize + 8);
}

inline std::size_t encoded_size(const Request& r) noexcept {
    const bool seeds = r.nu && r.eta;
    return 1 + (seeds ? 32 : 0) + 8 + 32 + kCommitRecSize + 8 + proof_size(r.opening.proof) + 4 +
           encoded_size(*r.net_rec);
}

inline std::size_t encoded_size(const Response& r) noexcept {
    std::size_t n = 4 + 4 + r.slash_proofs.size() * (4 + kSlashProofSize);
    for (const auto& p : r.peers) n += 4 + encoded_size(*p);
    return n;
}

}  // namespace aetherweave::wire
