#pragma once

// Gossip records, request/response messages and slashing evidence.
//
// Records are immutable once built and are shared between tables and
// messages through shared_ptr<const T>. Attestations are transparent: the
// verifier re-checks the underlying relation against the KeyDirectory
// instead of checking a zero-knowledge proof.

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

#include <absl/container/inlined_vector.h>

#include "aetherweave/bytes.hpp"
#include "aetherweave/field.hpp"
#include "aetherweave/hash.hpp"
#include "aetherweave/identity.hpp"
#include "aetherweave/merkle.hpp"
#include "aetherweave/slashing_share.hpp"

namespace aetherweave {

using Timestamp = std::int64_t;  // simulated milliseconds
using Round = std::int64_t;
using AddressToken = std::uint64_t;

/// Number of most recent rounds of commitments retained per peer record.
inline constexpr std::size_t kDefaultCommitHistory = 4;

namespace detail {

/// Caches a positive verification result. Copies start unverified, so a
/// modified copy of a verified record is always re-checked.
class VerifiedFlag {
public:
    VerifiedFlag() = default;
    VerifiedFlag(const VerifiedFlag&) noexcept {}
    VerifiedFlag& operator=(const VerifiedFlag&) noexcept {
        ok_ = false;
        return *this;
    }
    bool get() const noexcept { return ok_; }
    void set() const noexcept { ok_ = true; }
    friend bool operator==(const VerifiedFlag&, const VerifiedFlag&) noexcept { return true; }

private:
    mutable bool ok_ = false;
};

/// Like VerifiedFlag, but remembers which (net_pk, round) the positive
/// result was for.
class VerifiedFor {
public:
    VerifiedFor() = default;
    VerifiedFor(const VerifiedFor&) noexcept {}
    VerifiedFor& operator=(const VerifiedFor&) noexcept {
        ok_ = false;
        return *this;
    }
    bool get(const Digest& pk, std::int64_t round) const noexcept { return ok_ && round_ == round && pk_ == pk; }
    void set(const Digest& pk, std::int64_t round) const noexcept {
        pk_ = pk;
        round_ = round;
        ok_ = true;
    }
    friend bool operator==(const VerifiedFor&, const VerifiedFor&) noexcept { return true; }

private:
    mutable Digest pk_;
    mutable std::int64_t round_ = 0;
    mutable bool ok_ = false;
};

}  // namespace detail

struct StakeAttestation {
    Digest stake_id;
    MerkleProof merkle_proof;
    Digest binding_tag;

    friend bool operator==(const StakeAttestation&, const StakeAttestation&) = default;
};

// Fields read on every receipt come first so they share a cache line.
struct alignas(64) NetRec {
    Timestamp ts = 0;
    AddressToken addr = 0;
    detail::VerifiedFlag verified;
    Digest net_pk;
    MerkleCommitment stake_com;
    StakeAttestation stake_att;
    Signature sig;

    friend bool operator==(const NetRec&, const NetRec&) = default;
};

struct ShareAttestation {
    Digest binding_tag;
    friend bool operator==(const ShareAttestation&, const ShareAttestation&) = default;
};

struct CommitRec {
    MerkleCommitment req_com;
    FieldElement share;
    ShareAttestation share_att;

    detail::VerifiedFor verified;

    friend bool operator==(const CommitRec&, const CommitRec&) = default;
};

struct CommitEntry {
    std::shared_ptr<const CommitRec> rec;
    Round round = 0;
};

/// Commit history; short enough to live inside the record.
using CommitList = absl::InlinedVector<CommitEntry, 4>;

struct PeerRec {
    std::shared_ptr<const NetRec> net_rec;
    CommitList commits;  // sorted by (round, req_com root), deduplicated

    const Digest& net_pk() const { return net_rec->net_pk; }
};

using NetRecPtr = std::shared_ptr<const NetRec>;
using CommitRecPtr = std::shared_ptr<const CommitRec>;
using PeerRecPtr = std::shared_ptr<const PeerRec>;

struct SlashProof {
    Digest net_pk;
    MerkleCommitment stake_com;
    Round round = 0;
    CommitRec cr1;
    CommitRec cr2;

    friend bool operator==(const SlashProof&, const SlashProof&) = default;
};

using SlashProofPtr = std::shared_ptr<const SlashProof>;

struct Opening {
    std::uint64_t ind = 0;  // 1-based position in the committed recipient list
    MerkleProof proof;
};

struct Request {
    std::optional<Seed> nu;  // both seeds absent in full-table mode
    std::optional<Seed> eta;
    Round round = 0;
    Signature nonce_sig;
    CommitRecPtr commit_rec;
    Opening opening;
    NetRecPtr net_rec;
};

struct Response {
    std::vector<PeerRecPtr> peers;
    std::vector<SlashProofPtr> slash_proofs;
};

enum class RecordError {
    ok,
    bad_signature,
    bad_attestation,
    stale_commitment,
    expired_record,
};

constexpr std::string_view to_string(RecordError e) noexcept {
    switch (e) {
        case RecordError::ok: return "ok";
        case RecordError::bad_signature: return "bad-signature";
        case RecordError::bad_attestation: return "bad-attestation";
        case RecordError::stale_commitment: return "stale-commitment";
        case RecordError::expired_record: return "expired-record";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// Signed payloads

inline Bytes address_message(AddressToken addr, Timestamp ts) { return ByteWriter{}.u64(addr).i64(ts).bytes(); }

/// (nu, eta, round) in seed-in-request mode, (round) alone when the seeds
/// are withheld.
inline Bytes nonce_message(const std::optional<Seed>& nu, const std::optional<Seed>& eta, Round round) {
    ByteWriter w;
    if (nu && eta) w.fixed(*nu).fixed(*eta);
    w.i64(round);
    return std::move(w).bytes();
}

// ---------------------------------------------------------------------------
// Stake attestation

inline Digest stake_binding_tag(const Digest& net_pk, const MerkleCommitment& stake_com) {
    return Hasher(Domain::stake_binding).update(net_pk).update(stake_com.root).update_u64(stake_com.size).finish();
}

inline StakeAttestation make_stake_attestation(const KeyMaterial& km, const MerkleCommitment& stake_com,
                                               MerkleProof proof) {
    return {km.stake_id, std::move(proof), stake_binding_tag(km.net_pk, stake_com)};
}

inline bool verify_stake_attestation(const KeyDirectory& dir, const Digest& net_pk, const MerkleCommitment& stake_com,
                                     const StakeAttestation& att) {
    if (att.binding_tag != stake_binding_tag(net_pk, stake_com)) return false;
    if (!vec_verify(stake_com, att.merkle_proof.index, att.stake_id, att.merkle_proof)) return false;
    // Relation check: the stake must belong to the key behind net_pk.
    const KeyMaterial* km = dir.find(net_pk);
    return km != nullptr && km->stake_id == att.stake_id;
}

inline NetRec make_net_rec(const KeyMaterial& km, const MerkleCommitment& stake_com, const StakeAttestation& att,
                           AddressToken addr, Timestamp ts) {
    NetRec rec;
    rec.net_pk = km.net_pk;
    rec.stake_com = stake_com;
    rec.stake_att = att;
    rec.addr = addr;
    rec.ts = ts;
    rec.sig = sign(km.net_sk, address_message(addr, ts));
    return rec;
}

// ---------------------------------------------------------------------------
// Share attestation

inline Digest share_binding_tag(const Digest& net_pk, Round round, const MerkleCommitment& req_com,
                                FieldElement share) {
    return Hasher(Domain::share_binding)
        .update(net_pk)
        .update_u64(static_cast<std::uint64_t>(round))
        .update(req_com.root)
        .update_u64(req_com.size)
        .update_u64(share.value())
        .finish();
}

inline CommitRec make_commit_rec(const KeyMaterial& km, Round round, const MerkleCommitment& req_com) {
    CommitRec cr;
    cr.req_com = req_com;
    cr.share = share_compute(km.sk, km.stake_sk, round, commitment_to_field(req_com));
    cr.share_att.binding_tag = share_binding_tag(km.net_pk, round, req_com, cr.share);
    return cr;
}

inline bool verify_share_attestation(const KeyDirectory& dir, const Digest& net_pk, Round round, const CommitRec& cr) {
    if (cr.verified.get(net_pk, round)) return true;
    if (cr.share_att.binding_tag != share_binding_tag(net_pk, round, cr.req_com, cr.share)) return false;
    const KeyMaterial* km = dir.find(net_pk);
    if (km == nullptr) return false;
    if (cr.share != share_compute(km->sk, km->stake_sk, round, commitment_to_field(cr.req_com))) return false;
    cr.verified.set(net_pk, round);
    return true;
}

// ---------------------------------------------------------------------------
// Validation and merging

inline bool contains_commitment(std::span<const MerkleCommitment> accepted, const MerkleCommitment& c) {
    return std::find(accepted.begin(), accepted.end(), c) != accepted.end();
}

inline RecordError validate_net_rec(const KeyDirectory& dir, const NetRec& rec,
                                    std::span<const MerkleCommitment> accepted_coms, Timestamp now,
                                    Timestamp expiry) {
    if (!rec.verified.get()) {
        if (!check_sig(dir, rec.net_pk, address_message(rec.addr, rec.ts), rec.sig)) return RecordError::bad_signature;
        if (!verify_stake_attestation(dir, rec.net_pk, rec.stake_com, rec.stake_att))
            return RecordError::bad_attestation;
        rec.verified.set();
    }
    if (!contains_commitment(accepted_coms, rec.stake_com)) return RecordError::stale_commitment;
    if (now - rec.ts > expiry) return RecordError::expired_record;
    return RecordError::ok;
}

namespace detail {

inline bool commit_less(const CommitEntry& a, const CommitEntry& b) {
    if (a.round != b.round) return a.round < b.round;
    if (a.rec == b.rec) return false;
    return a.rec->req_com.root < b.rec->req_com.root;
}

inline bool commit_same(const CommitEntry& a, const CommitEntry& b) {
    return a.round == b.round && (a.rec == b.rec || a.rec->req_com.root == b.rec->req_com.root);
}

}  // namespace detail

/// Sorts, deduplicates and trims a commit list to the `history` most recent
/// rounds.
inline void normalize_commits(CommitList& commits, std::size_t history = kDefaultCommitHistory) {
    std::sort(commits.begin(), commits.end(), detail::commit_less);
    commits.erase(std::unique(commits.begin(), commits.end(), detail::commit_same), commits.end());
    if (!commits.empty() && history > 0) {
        const Round newest = commits.back().round;
        const Round oldest_kept = newest - static_cast<Round>(history) + 1;
        commits.erase(commits.begin(), std::find_if(commits.begin(), commits.end(),
                                                    [&](const CommitEntry& e) { return e.round >= oldest_kept; }));
    }
}

/// True when every entry of `sub` appears in `super`; both normalized.
inline bool commits_subset(std::span<const CommitEntry> sub, std::span<const CommitEntry> super) {
    return std::includes(super.begin(), super.end(), sub.begin(), sub.end(), detail::commit_less);
}

/// Keeps the newer NetRec (ties keep `existing`) and unions the commits.
inline PeerRec merge_peer_rec(const PeerRec& existing, const PeerRec& incoming,
                              std::size_t history = kDefaultCommitHistory) {
    if (existing.net_pk() != incoming.net_pk()) throw std::invalid_argument("merge_peer_rec: net_pk mismatch");
    PeerRec out;
    out.net_rec = incoming.net_rec->ts > existing.net_rec->ts ? incoming.net_rec : existing.net_rec;
    out.commits = existing.commits;
    out.commits.insert(out.commits.end(), incoming.commits.begin(), incoming.commits.end());
    normalize_commits(out.commits, history);
    return out;
}

/// First pair of distinct commitments sharing a round, if any.
inline std::optional<SlashProof> detect_duplicate_commit(const PeerRec& rec) {
    std::vector<CommitEntry> sorted(rec.commits.begin(), rec.commits.end());
    std::sort(sorted.begin(), sorted.end(), detail::commit_less);
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
        const auto& a = sorted[i];
        const auto& b = sorted[i + 1];
        if (a.round == b.round && a.rec->req_com != b.rec->req_com)
            return SlashProof{rec.net_pk(), rec.net_rec->stake_com, a.round, *a.rec, *b.rec};
    }
    return std::nullopt;
}

inline bool verify_slash_proof(const KeyDirectory& dir, const SlashProof& p,
                               std::span<const MerkleCommitment> accepted_coms) {
    if (!contains_commitment(accepted_coms, p.stake_com)) return false;
    if (p.cr1.req_com == p.cr2.req_com) return false;
    return verify_share_attestation(dir, p.net_pk, p.round, p.cr1) &&
           verify_share_attestation(dir, p.net_pk, p.round, p.cr2);
}

struct RecoveredStake {
    FieldElement stake_sk;
    Digest stake_id;
};

/// Interpolates the offender's stake secret from two shares of one round.
/// Throws std::invalid_argument if the proof does not verify.
inline RecoveredStake recover_from_slash_proof(const KeyDirectory& dir, const SlashProof& p,
                                               std::span<const MerkleCommitment> accepted_coms) {
    if (!verify_slash_proof(dir, p, accepted_coms))
        throw std::invalid_argument("recover_from_slash_proof: proof does not verify");
    const FieldElement sk = share_recover(commitment_to_field(p.cr1.req_com), p.cr1.share,
                                          commitment_to_field(p.cr2.req_com), p.cr2.share);
    return {sk, hash_stake_id(sk)};
}

}  // namespace aetherweave
