#pragma once

// Per-node protocol state machine: heartbeats, request handling, record
// ingestion, table maintenance, epoch transitions and the eclipse flag.
//
// A Node never talks to the network itself. begin_round() returns the
// requests to send, respond() returns the reply, and the simulator moves
// them around.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <absl/container/flat_hash_map.h>
#include <absl/container/flat_hash_set.h>

#include "aetherweave/chain.hpp"
#include "aetherweave/identity.hpp"
#include "aetherweave/merkle.hpp"
#include "aetherweave/prng.hpp"
#include "aetherweave/records.hpp"
#include "aetherweave/rng.hpp"

namespace aetherweave {


/// Hands out one shared object per distinct (NetRec, commits) content, keyed
/// by object identity. Purely a memory optimization for simulations where
/// many nodes would otherwise hold private copies of the same record.
class RecordPool {
public:
    PeerRecPtr get(const NetRecPtr& net, std::span<const CommitEntry> commits) {
        std::uint64_t h = detail::fmix64(reinterpret_cast<std::uintptr_t>(net.get()));
        for (const auto& c : commits)
            h = detail::fmix64(h ^ reinterpret_cast<std::uintptr_t>(c.rec.get()) ^ static_cast<std::uint64_t>(c.round));
        auto& bucket = map_[h];
        for (const auto& p : bucket)
            if (p->net_rec == net && std::equal(p->commits.begin(), p->commits.end(), commits.begin(), commits.end(),
                                                [](const CommitEntry& a, const CommitEntry& b) {
                                                    return a.rec == b.rec && a.round == b.round;
                                                }))
                return p;
        auto rec = std::make_shared<PeerRec>();
        rec->net_rec = net;
        rec->commits.assign(commits.begin(), commits.end());
        bucket.push_back(rec);
        return bucket.back();
    }

    /// Forgets records nobody else references any more.
    void sweep() {
        for (auto it = map_.begin(); it != map_.end();) {
            std::erase_if(it->second, [](const PeerRecPtr& p) { return p.use_count() == 1; });
            if (it->second.empty())
                map_.erase(it++);
            else
                ++it;
        }
    }

    std::size_t size() const noexcept {
        std::size_t n = 0;
        for (const auto& [h, b] : map_) n += b.size();
        return n;
    }

private:
    struct Premixed {
        std::size_t operator()(std::uint64_t h) const noexcept { return static_cast<std::size_t>(h); }
    };
    absl::flat_hash_map<std::uint64_t, std::vector<PeerRecPtr>, Premixed> map_;
};

enum class RetrievalMode { seed_in_request, full_table };

constexpr std::string_view to_string(RetrievalMode m) noexcept {
    return m == RetrievalMode::seed_in_request ? "seed-in-request" : "full-table";
}

namespace detail {
// ceil() that ignores floating-point dust, so 1.1 * 400 gives 440.
inline std::size_t ceil_count(double x) { return static_cast<std::size_t>(std::ceil(x - 1e-9)); }
}  // namespace detail

struct NodeConfig {
    std::size_t n = 10'000;
    double s = 4.0;
    double table_cap_slack = 0.1;  // ε_cap
    double flag_threshold = 0.75;  // θ
    double overlay_prob = 1.0;     // p_c
    RetrievalMode mode = RetrievalMode::seed_in_request;
    std::size_t commit_history = kDefaultCommitHistory;  // m

    double root_n() const { return std::sqrt(static_cast<double>(n)); }
    double slice_threshold() const { return s / root_n(); }
    double expected_slice() const { return s * root_n(); }
    std::size_t slice_size() const { return detail::ceil_count(expected_slice()); }
    std::size_t table_cap() const { return detail::ceil_count((1.0 + table_cap_slack) * expected_slice()); }
    double flag_count() const { return flag_threshold * expected_slice(); }

    void validate() const {
        if (n < 2) throw std::invalid_argument("n must be at least 2");
        if (s < 1.0) throw std::invalid_argument("s must be >= 1");
        if (slice_threshold() >= 1.0) throw std::invalid_argument("s/sqrt(n) must be < 1");
        if (!(table_cap_slack > 0.0)) throw std::invalid_argument("table_cap_slack must be > 0");
        if (!(flag_threshold > 0.0 && flag_threshold < 1.0)) throw std::invalid_argument("theta must be in (0,1)");
        if (!(overlay_prob > 0.0 && overlay_prob <= 1.0)) throw std::invalid_argument("overlay_prob must be in (0,1]");
        if (commit_history < 1) throw std::invalid_argument("commit_history must be >= 1");
    }
};

enum class RespondStatus {
    ok,
    stale_round,
    bad_nonce_sig,
    bad_opening,
    bad_index,
    bad_share,
    rate_limited,
    deny_listed,
};
inline constexpr std::size_t kRespondStatusCount = 8;

constexpr std::string_view to_string(RespondStatus s) noexcept {
    switch (s) {
        case RespondStatus::ok: return "ok";
        case RespondStatus::stale_round: return "stale-round";
        case RespondStatus::bad_nonce_sig: return "bad-nonce-sig";
        case RespondStatus::bad_opening: return "bad-opening";
        case RespondStatus::bad_index: return "bad-index";
        case RespondStatus::bad_share: return "bad-share";
        case RespondStatus::rate_limited: return "rate-limited";
        case RespondStatus::deny_listed: return "deny-listed";
    }
    return "unknown";
}

inline constexpr std::size_t kRecordErrorCount = 5;

struct Outbound {
    Digest dest_pk;
    AddressToken dest_addr = 0;
    std::shared_ptr<const Request> request;
};

struct HeartbeatBatch {
    std::vector<Outbound> requests;
    MerkleCommitment req_com;
    CommitRecPtr commit_rec;
};

struct RespondResult {
    RespondStatus status = RespondStatus::ok;
    Response response;
};

struct ReceiveResult {
    RecordError error = RecordError::ok;
    bool accepted = false;
    bool in_gsp = false;
    bool in_priv = false;
    SlashProofPtr slash;  // set when this record exposed a new violator
};

struct NodeCounters {
    std::array<std::uint64_t, kRecordErrorCount> record_errors{};
    std::array<std::uint64_t, kRespondStatusCount> respond_status{};
    std::uint64_t invalid_slash_proofs = 0;
    std::uint64_t slashes_detected = 0;
    std::uint64_t evictions = 0;
    std::uint64_t expirations = 0;
};

/// Prefetches both cache lines of a heap object.
inline void prefetch_object(const void* p) noexcept {
    __builtin_prefetch(p);
    __builtin_prefetch(static_cast<const char*>(p) + 64);
}

/// One peer table: records keyed by net_pk, each with its score under the
/// table's current seed. Keys and entries live in parallel arrays so the
/// per-request slice filter scans contiguous memory.
class PeerTable {
public:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    std::size_t size() const noexcept { return keys_.size(); }
    bool empty() const noexcept { return keys_.empty(); }
    bool contains(const Digest& pk) const { return find(pk) != npos; }

    const Digest& key(std::size_t i) const { return keys_[i]; }
    const PeerRecPtr& rec(std::size_t i) const { return items_[i].rec; }
    double score(std::size_t i) const { return items_[i].score; }
    Timestamp ts(std::size_t i) const { return items_[i].ts; }
    IdMix mix(std::size_t i) const { return mixes_[i]; }
    std::span<const Digest> keys() const noexcept { return keys_; }

    /// Dense index of `pk`, or npos. When the stored record is `hint` the
    /// key comparison is skipped, since a record determines its key.
    std::size_t find(const Digest& pk, const PeerRec* hint = nullptr) const {
        if (slots_.empty()) return npos;
        const std::uint64_t tag = tag_of(pk);
        for (std::size_t h = home(pk);; h = (h + 1) & mask_) {
            const std::uint64_t sl = slots_[h];
            if (sl == 0) return npos;
            if ((sl >> 32) == tag) {
                const std::size_t i = (sl & 0xffffffffu) - 1;
                if (items_[i].rec.get() == hint || keys_[i] == pk) return i;
            }
        }
    }

    void prefetch(const Digest& pk) const noexcept {
        if (!slots_.empty()) __builtin_prefetch(&slots_[home(pk)]);
    }

    /// Second prefetch stage: pulls in the entry the home slot points at.
    void prefetch_entry(const Digest& pk) const noexcept {
        if (slots_.empty()) return;
        const std::uint64_t sl = slots_[home(pk)];
        if (sl != 0) __builtin_prefetch(&items_[(sl & 0xffffffffu) - 1]);
    }

    /// Third stage: the stored record itself, unless it is `incoming`.
    void prefetch_record(const Digest& pk, const PeerRec* incoming) const noexcept {
        if (slots_.empty()) return;
        const std::uint64_t sl = slots_[home(pk)];
        if (sl == 0) return;
        const PeerRec* r = items_[(sl & 0xffffffffu) - 1].rec.get();
        if (r != incoming) prefetch_object(r);
    }

    /// Inserts or replaces; returns the dense index.
    std::size_t put(const Digest& pk, PeerRecPtr rec, double score) {
        oldest_ts_ = std::min(oldest_ts_, rec->net_rec->ts);
        if (const std::size_t i = find(pk); i != npos) {
            items_[i].ts = rec->net_rec->ts;
            items_[i].rec = std::move(rec);
            items_[i].score = score;
            return i;
        }
        if (2 * (keys_.size() + 1) > slots_.size()) rehash(std::max<std::size_t>(64, 2 * slots_.size()));
        const std::size_t i = keys_.size();
        keys_.push_back(pk);
        const Timestamp ts = rec->net_rec->ts;
        items_.push_back(Item{std::move(rec), score, kNoMark, ts});
        mixes_.push_back(id_mix(pk));
        slots_[free_slot(pk)] = (tag_of(pk) << 32) | (i + 1);
        return i;
    }

    /// Replaces the record at dense index `i` (same key).
    void replace(std::size_t i, PeerRecPtr rec) {
        oldest_ts_ = std::min(oldest_ts_, rec->net_rec->ts);
        items_[i].ts = rec->net_rec->ts;
        items_[i].rec = std::move(rec);
    }

    /// Stamps entry `i` with `round`; false if it already carried that stamp.
    bool mark(std::size_t i, Round round) {
        if (items_[i].mark == round) return false;
        items_[i].mark = round;
        return true;
    }

    bool erase(const Digest& pk) {
        const std::size_t i = find(pk);
        if (i == npos) return false;
        erase_at(i);
        return true;
    }

    void rescore(const Seed& seed) {
        for (std::size_t i = 0; i < keys_.size(); ++i) items_[i].score = prng_score(seed, mixes_[i]);
    }

    /// Drops records with now - ts > expiry. Returns the number removed.
    std::size_t evict_expired(Timestamp now, Timestamp expiry) {
        if (now - oldest_ts_ <= expiry) return 0;
        std::size_t removed = 0;
        for (std::size_t i = keys_.size(); i-- > 0;) {
            if (now - items_[i].ts > expiry) {
                erase_at(i);
                ++removed;
            }
        }
        oldest_ts_ = kNoTs;
        for (const auto& it : items_) oldest_ts_ = std::min(oldest_ts_, it.ts);
        return removed;
    }

    /// Removes highest-score entries until size <= cap; returns them.
    std::vector<Digest> evict_over_cap(std::size_t cap) {
        std::vector<Digest> evicted;
        if (keys_.size() <= cap) return evicted;
        const std::size_t over = keys_.size() - cap;
        std::vector<std::uint32_t> idx(keys_.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::uint32_t>(i);
        const auto worse = [&](std::uint32_t a, std::uint32_t b) {
            if (items_[a].score != items_[b].score) return items_[a].score > items_[b].score;
            return keys_[b] < keys_[a];
        };
        std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(over - 1), idx.end(), worse);
        idx.resize(over);
        // Descending order keeps swap-with-last erasure from moving a victim.
        std::sort(idx.begin(), idx.end(), std::greater<>());
        for (auto i : idx) {
            evicted.push_back(keys_[i]);
            erase_at(i);
        }
        return evicted;
    }

    /// (score, key) pairs sorted ascending.
    std::vector<std::pair<double, Digest>> ranked() const {
        std::vector<std::pair<double, Digest>> out;
        out.reserve(keys_.size());
        for (std::size_t i = 0; i < keys_.size(); ++i) out.emplace_back(items_[i].score, keys_[i]);
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    struct Item {
        PeerRecPtr rec;
        double score = 0.0;
        Round mark = 0;
        Timestamp ts = 0;  // copy of rec->net_rec->ts
    };

    std::size_t home(const Digest& pk) const noexcept { return static_cast<std::size_t>(pk.word(1)) & mask_; }
    static std::uint64_t tag_of(const Digest& pk) noexcept { return pk.word(1) >> 32; }

    std::size_t free_slot(const Digest& pk) const noexcept {
        std::size_t h = home(pk);
        while (slots_[h] != 0) h = (h + 1) & mask_;
        return h;
    }

    std::size_t slot_of(std::size_t i) const noexcept {
        const std::uint64_t want = (tag_of(keys_[i]) << 32) | (i + 1);
        std::size_t h = home(keys_[i]);
        while (slots_[h] != want) h = (h + 1) & mask_;
        return h;
    }

    void rehash(std::size_t capacity) {
        slots_.assign(capacity, 0);
        mask_ = capacity - 1;
        for (std::size_t i = 0; i < keys_.size(); ++i) slots_[free_slot(keys_[i])] = (tag_of(keys_[i]) << 32) | (i + 1);
    }

    // Dense arrays use swap-with-last; the index uses backward-shift
    // deletion, so it never holds tombstones.
    void erase_at(std::size_t i) {
        std::size_t hole = slot_of(i);
        const std::size_t last = keys_.size() - 1;
        if (i != last) {
            slots_[slot_of(last)] = (tag_of(keys_[last]) << 32) | (i + 1);
            keys_[i] = keys_[last];
            items_[i] = std::move(items_[last]);
            mixes_[i] = mixes_[last];
        }
        keys_.pop_back();
        items_.pop_back();
        mixes_.pop_back();
        slots_[hole] = 0;
        for (std::size_t j = (hole + 1) & mask_; slots_[j] != 0; j = (j + 1) & mask_) {
            const std::size_t h = home(keys_[(slots_[j] & 0xffffffffu) - 1]);
            const bool stays = hole <= j ? (hole < h && h <= j) : (hole < h || h <= j);
            if (stays) continue;
            slots_[hole] = slots_[j];
            slots_[j] = 0;
            hole = j;
        }
    }

    static constexpr Timestamp kNoTs = std::numeric_limits<Timestamp>::max();
    static constexpr Round kNoMark = std::numeric_limits<Round>::min();
    std::vector<Digest> keys_;
    std::vector<Item> items_;
    std::vector<IdMix> mixes_;
    std::vector<std::uint64_t> slots_;  // (tag << 32) | (dense index + 1); 0 = empty
    std::size_t mask_ = 0;
    Timestamp oldest_ts_ = kNoTs;
};

/// Called when a node recovers a violator's stake secret.
using SlashSink = std::function<void(const SlashProof&, const RecoveredStake&)>;

class Node {
public:
    Node(NodeConfig cfg, ProtocolParams params, KeyMaterial km, AddressToken addr, const KeyDirectory& dir,
         std::uint64_t seed)
        : cfg_(cfg), params_(params), km_(std::move(km)), addr_(addr), dir_(&dir), seed_(seed) {
        cfg_.validate();
        params_.validate();
        draw_seeds(0);
    }

    // --- setup -------------------------------------------------------------

    /// Installs the genesis commitment and this node's opening against it.
    void join_epoch(const MerkleCommitment& com, const std::optional<StakeOpening>& own) { epoch_transition(com, own); }

    /// Adds a bootstrap contact to both tables without validation.
    void add_bootstrap(PeerRecPtr rec) {
        const Digest pk = rec->net_pk();
        gsp_.put(pk, rec, prng_score(nu_, pk));
        priv_.put(pk, rec, prng_score(eta_, pk));
    }

    /// Warm-start insertion: keeps the record only in the tables whose
    /// current slice it falls in.
    void warm_insert(const PeerRecPtr& rec) {
        const Digest& pk = rec->net_pk();
        if (pk == km_.net_pk) return;
        const double t = cfg_.slice_threshold();
        const double a = prng_score(nu_, pk), b = prng_score(eta_, pk);
        if (a < t) gsp_.put(pk, rec, a);
        if (b < t) priv_.put(pk, rec, b);
    }

    void set_slash_sink(SlashSink sink) { sink_ = std::move(sink); }
    /// Optional shared pool for merged records; must outlive the node.
    void set_record_pool(RecordPool* pool) noexcept { pool_ = pool; }

    /// Changes the salt of the η stream only (ν and everything else stay
    /// identical).
    void set_eta_salt(std::uint64_t salt) {
        eta_salt_ = salt;
        draw_seeds(round_);
    }

    void set_addr(AddressToken addr) noexcept { addr_ = addr; }

    // --- protocol ----------------------------------------------------------

    HeartbeatBatch begin_round(Round round, Timestamp now) {
        start_round(round);
        if (stalled_) return {};
        std::vector<std::pair<Digest, AddressToken>> targets;
        const auto ranked = gsp_.ranked();
        const std::size_t m = std::min(ranked.size(), cfg_.slice_size());
        targets.reserve(m);
        for (std::size_t i = 0; i < m; ++i)
            targets.emplace_back(ranked[i].second, gsp_.rec(gsp_.find(ranked[i].second))->net_rec->addr);
        return build_batch(round, now, targets);
    }

    /// Slashable variant: k disjoint batches of slice_size() targets, each
    /// with its own commitment. Targets are taken from `known_peers` in
    /// ascending ν-score order.
    std::vector<HeartbeatBatch> violator_begin_round(Round round, Timestamp now, std::size_t k,
                                                     const std::vector<std::pair<Digest, AddressToken>>& known_peers) {
        if (k < 2) throw std::invalid_argument("violator_begin_round: k must be >= 2");
        return batches_from(round, now, k, known_peers);
    }

    /// One batch aimed at the lowest-ν entries of `known_peers` instead of
    /// the table. Used for nodes that never read responses.
    HeartbeatBatch begin_round_from(Round round, Timestamp now,
                                    const std::vector<std::pair<Digest, AddressToken>>& known_peers) {
        auto out = batches_from(round, now, 1, known_peers);
        return out.empty() ? HeartbeatBatch{} : std::move(out.front());
    }

    /// Runs the request checks and sender-record intake without building a
    /// response.
    RespondStatus accept(const Request& req, Timestamp now) {
        const RespondStatus st = check_request(req, now);
        ++counters_.respond_status[static_cast<std::size_t>(st)];
        return st;
    }

    RespondResult respond(const Request& req, Timestamp now) {
        RespondResult out;
        out.status = check_request(req, now);
        ++counters_.respond_status[static_cast<std::size_t>(out.status)];
        if (out.status != RespondStatus::ok) return out;

        auto& peers = out.response.peers;
        if (cfg_.mode == RetrievalMode::full_table) {
            peers.reserve(gsp_.size());
            peers.reserve(gsp_.size());
            for (std::size_t i = 0; i < gsp_.size(); ++i) peers.push_back(gsp_.rec(i));
        } else {
            // Branch-free selection on the integer form of the score test:
            // (w >> 11) / 2^53 < t  <=>  (w >> 11) < ceil(t * 2^53).
            const auto limit = static_cast<std::uint64_t>(std::ceil(cfg_.slice_threshold() * 0x1.0p53));
            const Seed nu = *req.nu, eta = *req.eta;
            const std::size_t n = gsp_.size();
            select_.resize(n);
            std::size_t k = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const IdMix mx = gsp_.mix(i);
                select_[k] = static_cast<std::uint32_t>(i);
                k += ((prng_word(nu, mx) >> 11) < limit) | ((prng_word(eta, mx) >> 11) < limit);
            }
            peers.reserve(k);
            for (std::size_t i = 0; i < k; ++i) peers.push_back(gsp_.rec(select_[i]));
        }
        out.response.slash_proofs.reserve(deny_list_.size());
        for (const auto& [pk, proof] : deny_list_) out.response.slash_proofs.push_back(proof);
        return out;
    }

    ReceiveResult receive_record(const PeerRecPtr& rec, Timestamp now) {
        ReceiveResult out;
        const Digest& pk = rec->net_pk();
        if (pk == km_.net_pk) return out;
        out.error = validate_net_rec(*dir_, *rec->net_rec, acc_coms_, now, params_.record_expiry);
        if (out.error != RecordError::ok) {
            ++counters_.record_errors[static_cast<std::size_t>(out.error)];
            return out;
        }
        out.accepted = true;

        // The tables are merged independently so that T_gsp (and hence every
        // response) never depends on what T_priv holds.
        const double t = cfg_.slice_threshold();
        const IdMix mx = id_mix(pk);
        const std::size_t ig = gsp_.find(pk, rec.get());
        const double a = ig != PeerTable::npos ? gsp_.score(ig) : prng_score(nu_, mx);
        std::size_t gi = PeerTable::npos;
        if (ig != PeerTable::npos || a < t) {
            gi = absorb_into(gsp_, ig, pk, rec, a, out);
            out.in_gsp = true;
        }
        const std::size_t ip = priv_.find(pk, rec.get());
        const double b = ip != PeerTable::npos ? priv_.score(ip) : prng_score(eta_, mx);
        if (ip != PeerTable::npos || b < t) {
            absorb_into(priv_, ip, pk, rec, b, out);
            out.in_priv = true;
        }
        if (!out.in_gsp && !out.in_priv) check_duplicates(rec, out);
        // The stamp only filters repeats; the set keeps the count exact if an
        // entry is evicted and re-inserted within the round.
        if (a < t && gsp_.mark(gi, round_)) new_unique_.insert(pk);
        return out;
    }

    void handle_response(const Response& resp, Timestamp now) {
        for (const auto& sp : resp.slash_proofs) {
            if (deny_list_.contains(sp->net_pk)) continue;
            if (verify_slash_proof(*dir_, *sp, acc_coms_))
                deny_list_.emplace(sp->net_pk, sp);
            else
                ++counters_.invalid_slash_proofs;
        }
        // Records live all over the heap; walk them with a staged prefetch
        // pipeline so the dependent loads of several records overlap.
        const auto& peers = resp.peers;
        const std::size_t n = peers.size();
        constexpr std::size_t kStage = 3;
        constexpr std::size_t kDepth = 5 * kStage;
        const auto pk_of = [&](std::size_t k) -> const Digest& { return peers[k]->net_pk(); };
        for (std::size_t i = 0; i < n + kDepth; ++i) {
            if (i < n) prefetch_object(peers[i].get());
            if (i >= kStage && i - kStage < n) prefetch_object(peers[i - kStage]->net_rec.get());
            if (i >= 2 * kStage && i - 2 * kStage < n) {
                gsp_.prefetch(pk_of(i - 2 * kStage));
                priv_.prefetch(pk_of(i - 2 * kStage));
            }
            if (i >= 3 * kStage && i - 3 * kStage < n) {
                gsp_.prefetch_entry(pk_of(i - 3 * kStage));
                priv_.prefetch_entry(pk_of(i - 3 * kStage));
            }
            if (i >= 4 * kStage && i - 4 * kStage < n) {
                const PeerRec* r = peers[i - 4 * kStage].get();
                gsp_.prefetch_record(r->net_pk(), r);
                priv_.prefetch_record(r->net_pk(), r);
            }
            if (i >= kDepth && i - kDepth < n) receive_record(peers[i - kDepth], now);
        }
        maintain_tables(now);
    }

    /// Expiry and cap eviction for both tables.
    void maintain_tables(Timestamp now) {
        counters_.expirations += gsp_.evict_expired(now, params_.record_expiry);
        counters_.expirations += priv_.evict_expired(now, params_.record_expiry);
        counters_.evictions += gsp_.evict_over_cap(cfg_.table_cap()).size();
        counters_.evictions += priv_.evict_over_cap(cfg_.table_cap()).size();
    }

    bool end_round_flag() {
        const bool flag = static_cast<double>(new_unique_.size()) < cfg_.flag_count();
        flag_history_.emplace_back(round_, flag);
        return flag;
    }

    void epoch_transition(const MerkleCommitment& com, const std::optional<StakeOpening>& own) {
        acc_coms_.push_back(com);
        while (acc_coms_.size() > params_.commitment_window) acc_coms_.erase(acc_coms_.begin());
        if (own) {
            own_att_ = make_stake_attestation(km_, com, own->proof);
            stake_com_ = com;
            stalled_ = false;
        } else {
            stalled_ = true;
        }
        std::erase_if(deny_list_, [&](const auto& kv) { return !contains_commitment(acc_coms_, kv.second->stake_com); });
    }

    /// Overlay neighbours: each T_priv entry independently with prob p_c.
    std::vector<Digest> build_overlay(Rng& rng) const {
        std::vector<Digest> keys(priv_.keys().begin(), priv_.keys().end());
        std::sort(keys.begin(), keys.end());
        std::vector<Digest> out;
        for (const auto& k : keys)
            if (rng.bernoulli(cfg_.overlay_prob)) out.push_back(k);
        return out;
    }

    /// This node's PeerRec as it would appear in its own heartbeat.
    PeerRecPtr self_record(Timestamp now) const {
        if (!stake_com_) return nullptr;
        auto pr = std::make_shared<PeerRec>();
        pr->net_rec = std::make_shared<const NetRec>(make_net_rec(km_, *stake_com_, own_att_, addr_, now));
        return pr;
    }

    // --- inspection --------------------------------------------------------

    const NodeConfig& config() const noexcept { return cfg_; }
    const KeyMaterial& keys() const noexcept { return km_; }
    const Digest& net_pk() const noexcept { return km_.net_pk; }
    AddressToken addr() const noexcept { return addr_; }
    Round round() const noexcept { return round_; }
    const Seed& nu() const noexcept { return nu_; }
    const Seed& eta() const noexcept { return eta_; }
    const PeerTable& t_gsp() const noexcept { return gsp_; }
    const PeerTable& t_priv() const noexcept { return priv_; }
    const std::vector<MerkleCommitment>& acc_coms() const noexcept { return acc_coms_; }
    const std::unordered_map<Digest, SlashProofPtr, DigestHash>& deny_list() const noexcept { return deny_list_; }
    std::size_t new_unique_count() const noexcept { return new_unique_.size(); }
    const std::vector<std::pair<Round, bool>>& flag_history() const noexcept { return flag_history_; }
    const NodeCounters& counters() const noexcept { return counters_; }
    bool stalled() const noexcept { return stalled_; }
    std::size_t recent_request_rounds() const noexcept { return recent_reqs_.size(); }

private:
    Round round_of(Timestamp now) const { return now / params_.round_length; }

    void draw_seeds(Round round) {
        Rng a(seed_, {static_cast<std::uint64_t>(round), 0});
        Rng b(seed_ ^ eta_salt_, {static_cast<std::uint64_t>(round), 1});
        nu_ = a.bytes<16>();
        eta_ = b.bytes<16>();
    }

    void start_round(Round round) {
        if (round <= round_) throw std::invalid_argument("begin_round: round must increase");
        round_ = round;
        draw_seeds(round);
        gsp_.rescore(nu_);
        priv_.rescore(eta_);
        new_unique_.clear();
        gc_requests(round);
    }

    void gc_requests(Round current) {
        while (!recent_reqs_.empty() && recent_reqs_.begin()->first < current - 1) recent_reqs_.erase(recent_reqs_.begin());
    }

    std::vector<HeartbeatBatch> batches_from(Round round, Timestamp now, std::size_t k,
                                             const std::vector<std::pair<Digest, AddressToken>>& known_peers) {
        start_round(round);
        std::vector<HeartbeatBatch> out;
        if (stalled_) return out;
        std::vector<std::pair<double, std::size_t>> order;
        order.reserve(known_peers.size());
        for (std::size_t i = 0; i < known_peers.size(); ++i)
            if (known_peers[i].first != km_.net_pk) order.emplace_back(prng_score(nu_, known_peers[i].first), i);
        const std::size_t chunk = cfg_.slice_size();
        const std::size_t need = std::min(order.size(), k * chunk);
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(need), order.end());
        for (std::size_t b = 0; b < k; ++b) {
            std::vector<std::pair<Digest, AddressToken>> targets;
            for (std::size_t j = b * chunk; j < std::min(need, (b + 1) * chunk); ++j)
                targets.push_back(known_peers[order[j].second]);
            if (targets.empty()) break;
            out.push_back(build_batch(round, now, targets));
        }
        return out;
    }

    HeartbeatBatch build_batch(Round round, Timestamp now, const std::vector<std::pair<Digest, AddressToken>>& targets) {
        HeartbeatBatch batch;
        auto net_rec = std::make_shared<const NetRec>(make_net_rec(km_, *stake_com_, own_att_, addr_, now));
        if (targets.empty()) return batch;
        std::vector<Digest> pks;
        pks.reserve(targets.size());
        for (const auto& t : targets) pks.push_back(t.first);
        MerkleTree tree(pks);
        batch.req_com = tree.commitment();
        batch.commit_rec = std::make_shared<const CommitRec>(make_commit_rec(km_, round, batch.req_com));

        std::optional<Seed> nu, eta;
        if (cfg_.mode == RetrievalMode::seed_in_request) {
            nu = nu_;
            eta = eta_;
        }
        const Signature nonce_sig = sign(km_.net_sk, nonce_message(nu, eta, round));
        batch.requests.reserve(targets.size());
        for (std::size_t k = 0; k < targets.size(); ++k) {
            auto req = std::make_shared<Request>();
            req->nu = nu;
            req->eta = eta;
            req->round = round;
            req->nonce_sig = nonce_sig;
            req->commit_rec = batch.commit_rec;
            req->opening = Opening{k + 1, tree.open(k)};
            req->net_rec = net_rec;
            batch.requests.push_back({targets[k].first, targets[k].second, std::move(req)});
        }
        return batch;
    }

    RespondStatus check_request(const Request& req, Timestamp now) {
        if (!req.net_rec || !req.commit_rec) return RespondStatus::bad_share;
        const Digest& sender = req.net_rec->net_pk;

        const CommitEntry sent{req.commit_rec, req.round};
        PeerRecPtr sender_rec;
        if (pool_) {
            sender_rec = pool_->get(req.net_rec, {&sent, 1});
        } else {
            auto fresh = std::make_shared<PeerRec>();
            fresh->net_rec = req.net_rec;
            fresh->commits.push_back(sent);
            sender_rec = std::move(fresh);
        }
        receive_record(sender_rec, now);

        const Round current = round_of(now);
        if (req.round != current) return RespondStatus::stale_round;
        const bool has_seeds = req.nu && req.eta;
        if (has_seeds != (cfg_.mode == RetrievalMode::seed_in_request)) return RespondStatus::bad_nonce_sig;
        if (!check_sig(*dir_, sender, nonce_message(req.nu, req.eta, req.round), req.nonce_sig))
            return RespondStatus::bad_nonce_sig;
        const auto ind = req.opening.ind;
        if (ind < 1 || ind > cfg_.slice_size()) return RespondStatus::bad_index;
        if (!vec_verify(req.commit_rec->req_com, ind - 1, km_.net_pk, req.opening.proof))
            return RespondStatus::bad_opening;
        if (!verify_share_attestation(*dir_, sender, req.round, *req.commit_rec)) return RespondStatus::bad_share;

        gc_requests(current);
        auto& seen = recent_reqs_[current];
        if (seen.contains(sender)) return RespondStatus::rate_limited;
        if (deny_list_.contains(sender)) return RespondStatus::deny_listed;
        seen.insert(sender);
        return RespondStatus::ok;
    }

    static bool normalized(std::span<const CommitEntry> c, std::size_t m) {
        return std::is_sorted(c.begin(), c.end(), detail::commit_less) &&
               std::adjacent_find(c.begin(), c.end(), detail::commit_same) == c.end() &&
               (c.empty() || m == 0 || c.back().round - c.front().round < static_cast<Round>(m));
    }

    /// `existing_ts` is existing->net_rec->ts, passed in by callers that
    /// already have it.
    PeerRecPtr merge_into(const PeerRecPtr& existing, Timestamp existing_ts, const PeerRecPtr& incoming) const {
        const std::size_t m = cfg_.commit_history;
        if (!existing) {
            if (normalized(incoming->commits, m)) return incoming;
            auto copy = std::make_shared<PeerRec>(*incoming);
            normalize_commits(copy->commits, m);
            return copy;
        }
        if (existing == incoming) return existing;
        const Timestamp incoming_ts = incoming->net_rec->ts;
        if (incoming_ts <= existing_ts && commits_subset(incoming->commits, existing->commits)) return existing;
        // Merge into scratch space first; when the result equals one of the
        // inputs that object is reused, so identical records stay shared.
        const NetRecPtr& net = incoming_ts > existing_ts ? incoming->net_rec : existing->net_rec;
        scratch_.assign(existing->commits.begin(), existing->commits.end());
        scratch_.insert(scratch_.end(), incoming->commits.begin(), incoming->commits.end());
        normalize_commits(scratch_, m);
        const auto same = [&](std::span<const CommitEntry> c) {
            return std::equal(scratch_.begin(), scratch_.end(), c.begin(), c.end(), detail::commit_same);
        };
        if (net == existing->net_rec && same(existing->commits)) return existing;
        if (net == incoming->net_rec && same(incoming->commits)) return incoming;
        if (pool_) return pool_->get(net, scratch_);
        auto out = std::make_shared<PeerRec>();
        out->net_rec = net;
        out->commits = scratch_;
        return out;
    }

    /// Merges `rec` into `table` (entry `i`, or a new entry); returns the
    /// entry's dense index.
    std::size_t absorb_into(PeerTable& table, std::size_t i, const Digest& pk, const PeerRecPtr& rec, double score,
                            ReceiveResult& out) {
        static const PeerRecPtr kNone;
        const PeerRecPtr& existing = i != PeerTable::npos ? table.rec(i) : kNone;
        if (existing == rec) return i;
        PeerRecPtr merged = merge_into(existing, existing ? table.ts(i) : 0, rec);
        if (merged == existing) return i;
        check_duplicates(merged, out);
        if (i != PeerTable::npos) {
            table.replace(i, std::move(merged));
            return i;
        }
        return table.put(pk, std::move(merged), score);
    }

    void check_duplicates(const PeerRecPtr& rec, ReceiveResult& out) {
        if (out.slash || rec->commits.size() < 2 || deny_list_.contains(rec->net_pk())) return;
        if (auto proof = detect_duplicate_commit(*rec)) out.slash = absorb_violation(*proof);
    }

    SlashProofPtr absorb_violation(const SlashProof& proof) {
        if (!verify_slash_proof(*dir_, proof, acc_coms_)) return nullptr;
        auto ptr = std::make_shared<const SlashProof>(proof);
        deny_list_.emplace(proof.net_pk, ptr);
        ++counters_.slashes_detected;
        if (sink_) sink_(proof, recover_from_slash_proof(*dir_, proof, acc_coms_));
        return ptr;
    }

    NodeConfig cfg_;
    ProtocolParams params_;
    KeyMaterial km_;
    AddressToken addr_;
    const KeyDirectory* dir_;
    std::uint64_t seed_;
    std::uint64_t eta_salt_ = 0;

    Round round_ = 0;
    Seed nu_, eta_;
    PeerTable gsp_, priv_;
    std::vector<MerkleCommitment> acc_coms_;
    std::optional<MerkleCommitment> stake_com_;
    StakeAttestation own_att_;
    bool stalled_ = true;

    std::unordered_map<Digest, SlashProofPtr, DigestHash> deny_list_;
    std::map<Round, absl::flat_hash_set<Digest, DigestHash>> recent_reqs_;
    absl::flat_hash_set<Digest, DigestHash> new_unique_;
    std::vector<std::pair<Round, bool>> flag_history_;
    NodeCounters counters_;
    SlashSink sink_;
    RecordPool* pool_ = nullptr;
    mutable CommitList scratch_;
    std::vector<std::uint32_t> select_;
};

}  // namespace aetherweave
