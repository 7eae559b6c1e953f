#pragma once

// Seeded discrete-event simulator over a fully connected network with
// uniform message delays. One run is strictly sequential and deterministic
// for a fixed SimConfig.
//
// Time layout of round r (r >= 1), with L = round_length:
//   r*L              prologue: epoch boundary (if due), churn
//   r*L + 1 + j      node heartbeat, j ~ U[0, L/10) per node
//   r*L + L - 1      snapshot: flags and metrics

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "aetherweave/chain.hpp"
#include "aetherweave/identity.hpp"
#include "aetherweave/node.hpp"
#include "aetherweave/prng.hpp"
#include "aetherweave/records.hpp"
#include "aetherweave/rng.hpp"
#include "aetherweave/wire.hpp"

namespace aetherweave {


enum class AdversaryKind { none, silent, filtering, oversampler, partition };

constexpr std::string_view to_string(AdversaryKind k) noexcept {
    switch (k) {
        case AdversaryKind::none: return "none";
        case AdversaryKind::silent: return "silent";
        case AdversaryKind::filtering: return "filtering";
        case AdversaryKind::oversampler: return "oversampler";
        case AdversaryKind::partition: return "partition";
    }
    return "unknown";
}

inline std::optional<AdversaryKind> parse_adversary(std::string_view s) {
    for (auto k : {AdversaryKind::none, AdversaryKind::silent, AdversaryKind::filtering, AdversaryKind::oversampler,
                   AdversaryKind::partition})
        if (s == to_string(k)) return k;
    return std::nullopt;
}

struct SimConfig {
    std::size_t n = 2500;
    double s = 4.0;
    double alpha = 0.0;
    int rounds = 30;
    Duration round_length = 2000;
    Duration delay_min = 20;
    Duration delay_max = 250;
    std::size_t churn_rate = 0;  // address changes per round
    AdversaryKind adversary = AdversaryKind::none;
    std::size_t oversample_k = 2;
    double theta = 0.75;
    std::uint64_t seed = 1;
    RetrievalMode mode = RetrievalMode::seed_in_request;

    double table_cap_slack = 0.1;
    std::size_t commit_history = kDefaultCommitHistory;
    Duration record_expiry = 6000;
    int epoch_rounds = 10;
    std::size_t commitment_window = 2;

    // Partition experiment: fraction of honest nodes on side A (0 = off).
    double partition_fraction = 0.0;

    // Bootstrap experiment: node 0 joins cold with a single contact.
    bool bootstrap = false;
    bool bootstrap_from_adversary = false;

    // Early exits. The holder count is checked at each round's snapshot; a
    // detection stop drains the queue right after the first verified proof.
    std::size_t stop_at_holders = 0;  // bootstrap: joiner held by this many
    bool stop_on_detection = false;

    // Connection-privacy hooks.
    std::optional<std::size_t> eta_salt_node;
    std::uint64_t eta_salt = 0;
    std::optional<std::size_t> transcript_node;

    std::size_t adversary_count() const {
        auto a = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(n) - 1e-9));
        if (adversary == AdversaryKind::oversampler) a = std::max<std::size_t>(a, 1);
        return a;
    }

    NodeConfig node_config() const {
        NodeConfig c;
        c.n = n;
        c.s = s;
        c.table_cap_slack = table_cap_slack;
        c.flag_threshold = theta;
        c.mode = mode;
        c.commit_history = commit_history;
        return c;
    }

    ProtocolParams protocol_params() const {
        ProtocolParams p;
        p.round_length = round_length;
        p.epoch_length = round_length * epoch_rounds;
        p.freeze = round_length;
        p.withdraw_delay = 2 * round_length;
        p.record_expiry = record_expiry;
        p.commitment_window = commitment_window;
        return p;
    }

    void validate() const {
        if (n < 2) throw std::invalid_argument("n must be at least 2");
        if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in [0,1)");
        if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
        if (delay_min < 0 || delay_min > delay_max) throw std::invalid_argument("need 0 <= delay_min <= delay_max");
        if (delay_max + round_length / 10 + 2 >= round_length)
            throw std::invalid_argument("round_length too short for the delay range");
        if (epoch_rounds < 2) throw std::invalid_argument("epoch_rounds must be >= 2");
        if (adversary_count() >= n) throw std::invalid_argument("no honest nodes left");
        if (adversary == AdversaryKind::oversampler && oversample_k < 2)
            throw std::invalid_argument("oversample_k must be >= 2");
        if (partition_fraction < 0.0 || partition_fraction >= 1.0)
            throw std::invalid_argument("partition_fraction must be in [0,1)");
        if (churn_rate > n) throw std::invalid_argument("churn_rate exceeds n");
        node_config().validate();
        protocol_params().validate();
    }
};

struct RoundMetrics {
    Round round = 0;
    double record_correctness = 1.0;
    double table_quality = 0.0;
    double flag_rate = 0.0;
    double flag_rate_a = 0.0;  // partition side A (or all honest when unpartitioned)
    double flag_rate_b = 0.0;
    double honest_repr = 1.0;
    double adv_repr = 0.0;
    std::size_t joiner_holders = 0;
    std::uint64_t msgs_sent = 0;
    std::uint64_t msgs_delivered = 0;
    std::uint64_t msgs_dropped = 0;
    std::uint64_t bytes_sent = 0;
};

struct Metrics {
    std::vector<RoundMetrics> rounds;
    std::size_t joiner_holders_initial = 0;
    std::optional<Round> detection_round;  // first verified SlashProof against a violator
    std::size_t violators = 0;
    std::size_t violators_slashed_on_chain = 0;
    std::uint64_t honest_slashed = 0;  // must stay 0
    std::array<std::uint64_t, kRespondStatusCount> respond_status{};
    std::array<std::uint64_t, kRecordErrorCount> record_errors{};
    std::uint64_t invalid_slash_proofs = 0;
    Bytes transcript;  // outbound bytes of transcript_node, in send order
};

class Simulation {
public:
    explicit Simulation(SimConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        setup();
    }

    Metrics run() {
        for (int r = 1; r <= cfg_.rounds; ++r) push(static_cast<Timestamp>(r) * cfg_.round_length, Kind::prologue, r);
        // Buckets keyed by time; within a bucket events are in insertion
        // (sequence) order, and events pushed for the current instant are
        // appended behind the one being processed.
        while (!queue_.empty()) {
            auto it = queue_.begin();
            now_ = it->first;
            for (std::size_t i = 0; i < it->second.size(); ++i) {
                Event ev = std::move(it->second[i]);
                dispatch(ev);
            }
            queue_.erase(it);
            if (stop_) queue_.clear();
        }
        finish();
        return std::move(metrics_);
    }

    // Exposed for tests.
    const Node& node(std::size_t i) const { return nodes_.at(i); }
    std::size_t size() const noexcept { return nodes_.size(); }
    bool is_adversary(std::size_t i) const { return i >= honest_; }
    const ContractState& chain() const { return *chain_; }
    const KeyDirectory& directory() const { return dir_; }

private:
    enum class Kind : std::uint8_t { prologue, heartbeat, request, response, snapshot };

    struct Event {
        Timestamp time;
        std::uint64_t seq;
        Kind kind;
        std::uint32_t node;  // round for prologue/snapshot, sender for messages
        AddressToken dest = 0;
        std::shared_ptr<const Request> req;
        std::shared_ptr<const Response> resp;

    };

    void push(Timestamp t, Kind k, std::uint64_t node, AddressToken dest = 0, std::shared_ptr<const Request> req = {},
              std::shared_ptr<const Response> resp = {}) {
        queue_[t].push_back(Event{t, seq_++, k, static_cast<std::uint32_t>(node), dest, std::move(req), std::move(resp)});
    }

    static constexpr std::uint64_t kTagKey = 1, kTagNode = 2, kTagAddr = 3, kTagJitter = 4, kTagDelay = 5,
                                   kTagChurn = 6, kTagSide = 7;

    AddressToken fresh_addr(std::size_t i) {
        return Rng(cfg_.seed, {kTagAddr, i, addr_version_[i]++})();
    }

    void setup() {
        const std::size_t n = cfg_.n;
        honest_ = n - cfg_.adversary_count();
        const NodeConfig nc = cfg_.node_config();
        const ProtocolParams pp = cfg_.protocol_params();

        std::vector<KeyMaterial> keys;
        keys.reserve(n);
        std::vector<std::pair<Digest, Account>> stakers;
        for (std::size_t i = 0; i < n; ++i) {
            keys.push_back(derive_identity(Rng(cfg_.seed, {kTagKey, i}).bytes<32>()));
            dir_.add(keys.back());
            stakers.emplace_back(keys.back().stake_id, i);
        }
        chain_ = std::make_unique<ContractState>(ContractState::with_genesis(pp, stakers));

        addr_version_.assign(n, 0);
        nodes_.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            const AddressToken a = fresh_addr(i);
            nodes_.emplace_back(nc, pp, keys[i], a, dir_, stream_key(cfg_.seed, {kTagNode, i}));
            addr_to_node_[a] = static_cast<std::uint32_t>(i);
            index_of_[keys[i].net_pk] = static_cast<std::uint32_t>(i);
        }
        if (cfg_.eta_salt_node) nodes_.at(*cfg_.eta_salt_node).set_eta_salt(cfg_.eta_salt);

        const MerkleCommitment com = chain_->get_commitment();
        for (auto& nd : nodes_) {
            nd.join_epoch(com, chain_->get_proof(nd.keys().stake_id));
            nd.set_slash_sink([this](const SlashProof& p, const RecoveredStake& st) { on_slash(p, st); });
            nd.set_record_pool(pool_.get());
        }

        side_.assign(n, 0);
        if (cfg_.partition_fraction > 0.0) {
            const auto a = static_cast<std::size_t>(std::llround(cfg_.partition_fraction * static_cast<double>(honest_)));
            std::vector<std::size_t> order(honest_);
            for (std::size_t i = 0; i < honest_; ++i) order[i] = i;
            Rng rng(cfg_.seed, {kTagSide});
            std::shuffle(order.begin(), order.end(), rng);
            for (std::size_t i = 0; i < honest_; ++i) side_[order[i]] = i < a ? 1 : 2;
        }

        // Round-0 state: every node's record with no commitments yet.
        std::vector<PeerRecPtr> initial(n);
        for (std::size_t i = 0; i < n; ++i) {
            initial[i] = nodes_[i].self_record(0);
            initial[i]->net_rec->verified.set();
        }
        const std::size_t joiner = cfg_.bootstrap ? 0 : n;
        for (std::size_t i = 0; i < n; ++i) {
            if (i == joiner) continue;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i || j == joiner || !same_view(i, j)) continue;
                nodes_[i].warm_insert(initial[j]);
            }
        }
        if (cfg_.bootstrap) {
            std::size_t contact = 1;
            if (cfg_.bootstrap_from_adversary) {
                if (honest_ == n) throw std::invalid_argument("bootstrap_from_adversary needs alpha > 0");
                contact = honest_;
            }
            nodes_[0].add_bootstrap(initial[contact]);
            metrics_.joiner_holders_initial = count_holders(0);
        }
        metrics_.violators = cfg_.adversary == AdversaryKind::oversampler ? n - honest_ : 0;
        known_honest_.clear();
        delay_rng_ = Rng(cfg_.seed, {kTagDelay});
    }

    bool silent(std::size_t i) const { return cfg_.adversary == AdversaryKind::silent && is_adversary(i); }

    /// Whether i may learn about j at all (partition views).
    bool same_view(std::size_t i, std::size_t j) const {
        return side_[i] == 0 || side_[j] == 0 || side_[i] == side_[j];
    }

    std::size_t count_holders(std::size_t target) const {
        const Digest& pk = nodes_[target].net_pk();
        std::size_t c = 0;
        for (std::size_t i = 0; i < honest_; ++i)
            if (i != target && nodes_[i].t_gsp().contains(pk)) ++c;
        return c;
    }

    Duration delay() { return delay_rng_.uniform_int(cfg_.delay_min, cfg_.delay_max); }

    RoundMetrics& current() { return metrics_.rounds.back(); }

    void dispatch(const Event& ev) {
        switch (ev.kind) {
            case Kind::prologue: prologue(static_cast<Round>(ev.node)); break;
            case Kind::heartbeat: heartbeat(ev.node); break;
            case Kind::request: deliver_request(ev); break;
            case Kind::response: deliver_response(ev); break;
            case Kind::snapshot: snapshot(); break;
        }
    }

    void prologue(Round r) {
        round_ = r;
        metrics_.rounds.push_back(RoundMetrics{});
        current().round = r;
        adv_cache_.clear();

        for (const auto& b : chain_->advance_clock(now_ - chain_->clock())) {
            for (auto& nd : nodes_) nd.epoch_transition(b.commitment, chain_->get_proof(nd.keys().stake_id));
        }

        if (cfg_.churn_rate > 0) {
            Rng rng(cfg_.seed, {kTagChurn, static_cast<std::uint64_t>(r)});
            std::vector<std::size_t> pool(honest_);
            for (std::size_t i = 0; i < honest_; ++i) pool[i] = i;
            const std::size_t c = std::min(cfg_.churn_rate, honest_);
            for (std::size_t k = 0; k < c; ++k) {
                auto pick = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(k),
                                                                     static_cast<std::int64_t>(honest_ - 1)));
                std::swap(pool[k], pool[pick]);
                apply_churn(pool[k]);
            }
        }

        const Timestamp base = now_;
        const Duration spread = std::max<Duration>(1, cfg_.round_length / 10);
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            Rng j(cfg_.seed, {kTagJitter, static_cast<std::uint64_t>(r), i});
            push(base + 1 + j.uniform_int(0, spread - 1), Kind::heartbeat, i);
        }
        push(base + cfg_.round_length - 1, Kind::snapshot, static_cast<std::uint64_t>(r));
    }

    void apply_churn(std::size_t i) {
        addr_to_node_.erase(nodes_[i].addr());
        const AddressToken a = fresh_addr(i);
        nodes_[i].set_addr(a);
        addr_to_node_[a] = static_cast<std::uint32_t>(i);
    }

    void heartbeat(std::uint32_t i) {
        Node& nd = nodes_[i];
        std::vector<HeartbeatBatch> batches;
        if (cfg_.adversary == AdversaryKind::oversampler && is_adversary(i)) {
            if (known_honest_.empty() || known_round_ != round_) {
                known_honest_.clear();
                for (std::size_t j = 0; j < honest_; ++j) known_honest_.emplace_back(nodes_[j].net_pk(), nodes_[j].addr());
                known_round_ = round_;
            }
            batches = nd.violator_begin_round(round_, now_, cfg_.oversample_k, known_honest_);
        } else if (silent(i)) {
            // Silent nodes never read responses, so their tables would only
            // decay; they address an ideal slice instead.
            if (known_all_.empty() || known_all_round_ != round_) {
                known_all_.clear();
                for (const auto& other : nodes_) known_all_.emplace_back(other.net_pk(), other.addr());
                known_all_round_ = round_;
            }
            batches.push_back(nd.begin_round_from(round_, now_, known_all_));
        } else {
            batches.push_back(nd.begin_round(round_, now_));
        }
        for (auto& b : batches) {
            if (!b.requests.empty()) latest_[i] = b.requests.front().request->net_rec;
            for (auto& out : b.requests) {
                count_send(i, wire::encoded_size(*out.request), [&] { return wire::encode(*out.request); });
                push(now_ + delay(), Kind::request, i, out.dest_addr, std::move(out.request));
            }
        }
    }

    template <class Encode>
    void count_send(std::size_t from, std::size_t bytes, Encode&& encode) {
        ++current().msgs_sent;
        current().bytes_sent += bytes;
        if (cfg_.transcript_node && *cfg_.transcript_node == from) {
            Bytes b = encode();
            metrics_.transcript.insert(metrics_.transcript.end(), b.begin(), b.end());
        }
    }

    /// Resolves the destination and applies the partition interceptor.
    std::optional<std::uint32_t> route(std::uint32_t from, AddressToken dest) {
        auto it = addr_to_node_.find(dest);
        if (it == addr_to_node_.end()) return std::nullopt;
        if (!same_view(from, it->second)) return std::nullopt;
        return it->second;
    }

    void deliver_request(const Event& ev) {
        auto to = route(ev.node, ev.dest);
        if (!to) {
            ++current().msgs_dropped;
            return;
        }
        ++current().msgs_delivered;
        const std::uint32_t j = *to;
        if (silent(j) || silent(ev.node)) {
            // Nothing would read the response.
            nodes_[j].accept(*ev.req, now_);
            return;
        }
        RespondResult rr = nodes_[j].respond(*ev.req, now_);
        if (rr.status != RespondStatus::ok) return;
        if (is_adversary(j)) {
            switch (cfg_.adversary) {
                case AdversaryKind::filtering: rr.response.peers = adversarial_slice(*ev.req); break;
                case AdversaryKind::partition: strip_other_side(rr.response, ev.node); break;
                default: break;
            }
        }
        auto resp = std::make_shared<const Response>(std::move(rr.response));
        count_send(j, wire::encoded_size(*resp), [&] { return wire::encode(*resp); });
        push(now_ + delay(), Kind::response, j, ev.req->net_rec->addr, nullptr, std::move(resp));
    }

    void deliver_response(const Event& ev) {
        auto to = route(ev.node, ev.dest);
        if (!to) {
            ++current().msgs_dropped;
            return;
        }
        ++current().msgs_delivered;
        nodes_[*to].handle_response(*ev.resp, now_);
    }

    /// Records of every adversarial node inside the requester's slices.
    std::vector<PeerRecPtr> adversarial_slice(const Request& req) {
        const Digest& who = req.net_rec->net_pk;
        auto it = adv_cache_.find(who);
        if (it != adv_cache_.end()) return it->second;
        std::vector<PeerRecPtr> out;
        const double t = cfg_.node_config().slice_threshold();
        for (std::size_t a = honest_; a < nodes_.size(); ++a) {
            const NetRecPtr& nr = latest_[a];
            if (!nr) continue;
            const bool pick = req.nu ? (prng_score(*req.nu, nr->net_pk) < t || prng_score(*req.eta, nr->net_pk) < t)
                                     : true;
            if (pick) {
                auto pr = std::make_shared<PeerRec>();
                pr->net_rec = nr;
                out.push_back(std::move(pr));
            }
        }
        adv_cache_.emplace(who, out);
        return out;
    }

    void strip_other_side(Response& resp, std::uint32_t requester) {
        std::erase_if(resp.peers, [&](const PeerRecPtr& p) {
            auto it = index_of_.find(p->net_pk());
            return it != index_of_.end() && !same_view(requester, it->second);
        });
    }

    void on_slash(const SlashProof& p, const RecoveredStake& st) {
        auto it = index_of_.find(p.net_pk);
        const bool violator = it != index_of_.end() && is_adversary(it->second);
        if (!violator) ++metrics_.honest_slashed;
        if (violator && !metrics_.detection_round) metrics_.detection_round = round_;
        if (chain_->slash(st.stake_sk, st.stake_id) == ContractStatus::ok && violator)
            ++metrics_.violators_slashed_on_chain;
        if (cfg_.stop_on_detection && metrics_.detection_round) stop_ = true;
    }

    void snapshot() {
        pool_->sweep();
        RoundMetrics& m = current();
        const double t = cfg_.node_config().slice_threshold();
        std::size_t flags = 0, flags_a = 0, flags_b = 0, n_a = 0, n_b = 0;
        std::uint64_t entries = 0, correct = 0, honest_entries = 0;
        double quality_sum = 0.0;
        std::size_t quality_nodes = 0;
        const std::size_t joiner = cfg_.bootstrap ? 0 : nodes_.size();

        for (std::size_t i = 0; i < honest_; ++i) {
            Node& nd = nodes_[i];
            const bool f = nd.end_round_flag();
            flags += f;
            if (side_[i] == 2) {
                ++n_b;
                flags_b += f;
            } else {
                ++n_a;
                flags_a += f;
            }
            const PeerTable& tg = nd.t_gsp();
            for (std::size_t k = 0; k < tg.size(); ++k) {
                ++entries;
                const std::uint32_t j = index_of_.at(tg.key(k));
                if (tg.rec(k)->net_rec->addr == nodes_[j].addr()) ++correct;
                if (!is_adversary(j)) ++honest_entries;
            }
            if (i == joiner) continue;
            std::size_t slice = 0, hit = 0;
            for (std::size_t j = 0; j < honest_; ++j) {
                if (j == i || !same_view(i, j)) continue;
                const Digest& pk = nodes_[j].net_pk();
                if (prng_score(nd.nu(), pk) >= t) continue;
                ++slice;
                const std::size_t e = tg.find(pk);
                if (e != PeerTable::npos && tg.rec(e)->net_rec->addr == nodes_[j].addr()) ++hit;
            }
            if (slice > 0) {
                quality_sum += static_cast<double>(hit) / static_cast<double>(slice);
                ++quality_nodes;
            }
        }
        const auto ratio = [](double a, double b) { return b > 0 ? a / b : 0.0; };
        m.flag_rate = ratio(static_cast<double>(flags), static_cast<double>(honest_));
        m.flag_rate_a = ratio(static_cast<double>(flags_a), static_cast<double>(n_a));
        m.flag_rate_b = ratio(static_cast<double>(flags_b), static_cast<double>(n_b));
        m.record_correctness = entries ? static_cast<double>(correct) / static_cast<double>(entries) : 1.0;
        m.honest_repr = entries ? static_cast<double>(honest_entries) / static_cast<double>(entries) : 1.0;
        m.adv_repr = entries ? 1.0 - m.honest_repr : 0.0;
        m.table_quality = ratio(quality_sum, static_cast<double>(quality_nodes));
        if (cfg_.bootstrap) m.joiner_holders = count_holders(0);
        if (cfg_.stop_at_holders > 0 && m.joiner_holders >= cfg_.stop_at_holders) stop_ = true;
    }

    void finish() {
        for (const auto& nd : nodes_) {
            const auto& c = nd.counters();
            for (std::size_t k = 0; k < kRespondStatusCount; ++k) metrics_.respond_status[k] += c.respond_status[k];
            for (std::size_t k = 0; k < kRecordErrorCount; ++k) metrics_.record_errors[k] += c.record_errors[k];
            metrics_.invalid_slash_proofs += c.invalid_slash_proofs;
        }
    }

    SimConfig cfg_;
    std::size_t honest_ = 0;
    KeyDirectory dir_;
    std::unique_ptr<ContractState> chain_;
    std::unique_ptr<RecordPool> pool_ = std::make_unique<RecordPool>();
    std::vector<Node> nodes_;
    std::vector<std::uint64_t> addr_version_;
    std::vector<std::uint8_t> side_;  // 0 = unpartitioned, 1 = A, 2 = B
    std::unordered_map<AddressToken, std::uint32_t> addr_to_node_;
    std::unordered_map<Digest, std::uint32_t, DigestHash> index_of_;
    std::unordered_map<std::size_t, NetRecPtr> latest_;
    std::unordered_map<Digest, std::vector<PeerRecPtr>, DigestHash> adv_cache_;
    std::vector<std::pair<Digest, AddressToken>> known_honest_;
    Round known_round_ = 0;
    std::vector<std::pair<Digest, AddressToken>> known_all_;
    Round known_all_round_ = 0;

    std::map<Timestamp, std::vector<Event>> queue_;
    std::uint64_t seq_ = 0;
    Timestamp now_ = 0;
    Round round_ = 0;
    bool stop_ = false;
    Rng delay_rng_;
    Metrics metrics_;
};

inline Metrics run(const SimConfig& cfg) { return Simulation(cfg).run(); }

}  // namespace aetherweave
