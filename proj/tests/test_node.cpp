#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "fixtures.hpp"

using namespace aetherweave;
using aw_test::World;

namespace {

NodeConfig big() {
    NodeConfig c;
    c.n = 10'000;
    c.s = 4;
    return c;
}

NodeConfig small() {
    NodeConfig c;
    c.n = 100;
    c.s = 2;  // threshold 0.2, slice 20, cap 22
    return c;
}

constexpr Timestamp at(Round r, Timestamp off = 10) { return r * 2000 + off; }

/// Request from `from` to `to` in round r, via a one-entry table.
std::shared_ptr<const Request> request_to(const World& w, Node& from, std::size_t to, Round r) {
    from.add_bootstrap(w.peer(to, 100 + to, 0));
    auto b = from.begin_round(r, at(r));
    for (auto& o : b.requests)
        if (o.dest_pk == w.keys[to].net_pk) return o.request;
    return nullptr;
}

}  // namespace

TEST(PeerTable, PutFindErase) {
    World w(10);
    PeerTable t;
    for (std::size_t i = 0; i < 10; ++i) t.put(w.keys[i].net_pk, w.peer(i, i, 0), static_cast<double>(i) / 10);
    EXPECT_EQ(t.size(), 10u);
    for (std::size_t i = 0; i < 10; ++i) {
        const auto k = t.find(w.keys[i].net_pk);
        ASSERT_NE(k, PeerTable::npos);
        EXPECT_EQ(t.key(k), w.keys[i].net_pk);
        EXPECT_DOUBLE_EQ(t.score(k), static_cast<double>(i) / 10);
    }
    EXPECT_TRUE(t.erase(w.keys[3].net_pk));
    EXPECT_FALSE(t.erase(w.keys[3].net_pk));
    EXPECT_FALSE(t.contains(w.keys[3].net_pk));
    const auto gone = t.evict_over_cap(6);
    EXPECT_EQ(gone.size(), 3u);
    for (std::size_t i : {7u, 8u, 9u}) EXPECT_FALSE(t.contains(w.keys[i].net_pk));
    for (std::size_t i : {0u, 1u, 2u, 4u, 5u, 6u}) EXPECT_TRUE(t.contains(w.keys[i].net_pk));
}

TEST(Node, BatchCoversWholeTable) {
    World w(401);
    Node a = w.node(0, big());
    for (std::size_t i = 1; i <= 400; ++i) a.add_bootstrap(w.peer(i, i, 0));
    const auto b = a.begin_round(1, at(1));
    ASSERT_EQ(b.requests.size(), 400u);
    std::set<Digest> dests;
    for (const auto& o : b.requests) {
        EXPECT_EQ(o.request->commit_rec, b.commit_rec);
        dests.insert(o.dest_pk);
    }
    EXPECT_EQ(dests.size(), 400u);
}

TEST(Node, BootstrapSingleRequestAndFreshSeeds) {
    World w(4);
    Node a = w.node(0, big());
    a.add_bootstrap(w.peer(1, 1, 0));
    const auto b1 = a.begin_round(1, at(1));
    EXPECT_EQ(b1.requests.size(), 1u);
    const Seed nu1 = a.nu(), eta1 = a.eta();
    a.begin_round(2, at(2));
    EXPECT_NE(nu1, a.nu());
    EXPECT_NE(eta1, a.eta());
    EXPECT_THROW(a.begin_round(2, at(2)), std::invalid_argument);
}

TEST(Node, RespondSizeAndRateLimit) {
    World w(402);
    Node a = w.node(0, big()), b = w.node(1, big());
    for (std::size_t i = 2; i < 402; ++i) b.add_bootstrap(w.peer(i, i, at(1, 0)));
    const auto req = request_to(w, a, 1, 1);
    ASSERT_TRUE(req);
    const auto r1 = b.respond(*req, at(1, 50));
    ASSERT_EQ(r1.status, RespondStatus::ok);
    EXPECT_GE(r1.response.peers.size(), 8u);
    EXPECT_LE(r1.response.peers.size(), 70u);
    for (const auto& p : r1.response.peers) {
        const auto& pk = p->net_pk();
        EXPECT_TRUE(prng_score(a.nu(), pk) < 0.04 || prng_score(a.eta(), pk) < 0.04);
    }
    EXPECT_EQ(b.respond(*req, at(1, 60)).status, RespondStatus::rate_limited);
    EXPECT_EQ(b.respond(*req, at(2, 60)).status, RespondStatus::stale_round);
}

TEST(Node, WrongOpeningRejected) {
    World w(4);
    Node a = w.node(0, small()), b = w.node(1, small());
    a.add_bootstrap(w.peer(1, 11, 0));
    a.add_bootstrap(w.peer(2, 12, 0));
    const auto batch = a.begin_round(1, at(1));
    ASSERT_EQ(batch.requests.size(), 2u);
    const auto& other = batch.requests[0].dest_pk == w.keys[1].net_pk ? batch.requests[1] : batch.requests[0];
    EXPECT_EQ(b.respond(*other.request, at(1, 50)).status, RespondStatus::bad_opening);

    Request forged = *batch.requests[0].request;
    forged.round = 1;
    forged.nonce_sig.data[0] ^= 1;
    EXPECT_EQ(b.respond(forged, at(1, 50)).status, RespondStatus::bad_nonce_sig);
}

TEST(Node, ReceiveRespectsSliceThresholds) {
    World w(400);
    Node a = w.node(0, big());
    a.begin_round(1, at(1));
    std::size_t target = 0;
    for (std::size_t i = 1; i < w.keys.size() && !target; ++i)
        if (prng_score(a.nu(), w.keys[i].net_pk) < 0.04 && prng_score(a.eta(), w.keys[i].net_pk) >= 0.04) target = i;
    ASSERT_NE(target, 0u);
    const auto r = a.receive_record(w.peer(target, 5, at(1)), at(1, 20));
    EXPECT_TRUE(r.accepted);
    EXPECT_TRUE(r.in_gsp);
    EXPECT_FALSE(r.in_priv);
    EXPECT_TRUE(a.t_gsp().contains(w.keys[target].net_pk));
    EXPECT_FALSE(a.t_priv().contains(w.keys[target].net_pk));
}

TEST(Node, NewerRecordSupersedes) {
    World w(400);
    Node a = w.node(0, big());
    a.begin_round(1, at(1));
    std::size_t target = 0;
    for (std::size_t i = 1; i < w.keys.size() && !target; ++i)
        if (prng_score(a.eta(), w.keys[i].net_pk) < 0.04) target = i;
    ASSERT_NE(target, 0u);
    a.receive_record(w.peer(target, 5, at(1)), at(1, 20));
    a.receive_record(w.peer(target, 6, at(1, 25)), at(1, 30));
    const auto& t = a.t_priv();
    const auto k = t.find(w.keys[target].net_pk);
    ASSERT_NE(k, PeerTable::npos);
    EXPECT_EQ(t.rec(k)->net_rec->addr, 6u);
    // An older copy does not roll the address back.
    a.receive_record(w.peer(target, 5, at(1)), at(1, 40));
    EXPECT_EQ(t.rec(t.find(w.keys[target].net_pk))->net_rec->addr, 6u);
}

TEST(Node, DuplicateCommitSlashesAndDenyLists) {
    World w(8);
    Node a = w.node(0, small());
    int sunk = 0;
    a.set_slash_sink([&](const SlashProof& p, const RecoveredStake& st) {
        ++sunk;
        EXPECT_EQ(p.net_pk, w.keys[3].net_pk);
        EXPECT_EQ(st.stake_sk, w.keys[3].stake_sk);
    });
    a.begin_round(1, at(1));
    const auto r = a.receive_record(w.peer(3, 5, at(1), {{w.commit(3, 1, 1), 1}, {w.commit(3, 1, 2), 1}}), at(1, 20));
    EXPECT_TRUE(r.accepted);
    ASSERT_TRUE(r.slash);
    EXPECT_EQ(sunk, 1);
    EXPECT_TRUE(a.deny_list().contains(w.keys[3].net_pk));
}

TEST(Node, SlashProofInResponseDenyLists) {
    World w(8);
    Node a = w.node(0, small());
    Node v = w.node(3, small());
    a.begin_round(1, at(1));
    auto proof = detect_duplicate_commit(*w.peer(3, 5, at(1), {{w.commit(3, 1, 1), 1}, {w.commit(3, 1, 2), 1}}));
    ASSERT_TRUE(proof);
    Response resp;
    resp.slash_proofs.push_back(std::make_shared<const SlashProof>(*proof));
    a.handle_response(resp, at(1, 30));
    EXPECT_TRUE(a.deny_list().contains(w.keys[3].net_pk));

    v.add_bootstrap(w.peer(0, 1, 0));
    const auto batch = v.begin_round(1, at(1));
    ASSERT_EQ(batch.requests.size(), 1u);
    EXPECT_EQ(a.respond(*batch.requests[0].request, at(1, 40)).status, RespondStatus::deny_listed);

    SlashProof bad = *proof;
    bad.cr2 = bad.cr1;
    Node c = w.node(1, small());
    c.begin_round(1, at(1));
    Response junk;
    junk.slash_proofs.push_back(std::make_shared<const SlashProof>(bad));
    c.handle_response(junk, at(1, 30));
    EXPECT_FALSE(c.deny_list().contains(w.keys[3].net_pk));
    EXPECT_EQ(c.counters().invalid_slash_proofs, 1u);
}

TEST(Node, ExpiredRecordIgnored) {
    World w(8);
    Node a = w.node(0, small());
    a.begin_round(5, at(5));
    Response resp;
    for (std::size_t i = 1; i < 8; ++i) resp.peers.push_back(w.peer(i, i, at(1)));  // > 6 s old
    a.handle_response(resp, at(5, 100));
    EXPECT_EQ(a.t_gsp().size(), 0u);
    EXPECT_EQ(a.t_priv().size(), 0u);
}

TEST(Node, CapEvictsLargestScores) {
    World w(300);
    Node a = w.node(0, small());
    a.begin_round(1, at(1));
    const std::size_t cap = small().table_cap();
    ASSERT_EQ(cap, 22u);
    std::vector<std::pair<double, std::size_t>> in;
    for (std::size_t i = 1; i < w.keys.size() && in.size() < cap + 3; ++i) {
        const double sc = prng_score(a.nu(), w.keys[i].net_pk);
        if (sc < small().slice_threshold()) in.emplace_back(sc, i);
    }
    ASSERT_EQ(in.size(), cap + 3);
    Response resp;
    for (const auto& [sc, i] : in) resp.peers.push_back(w.peer(i, i, at(1)));
    a.handle_response(resp, at(1, 50));
    EXPECT_EQ(a.t_gsp().size(), cap);
    EXPECT_LE(a.t_priv().size(), cap);
    std::sort(in.begin(), in.end());
    for (std::size_t k = 0; k < in.size(); ++k)
        EXPECT_EQ(a.t_gsp().contains(w.keys[in[k].second].net_pk), k < cap) << k;
}

TEST(Node, FlagWithoutRecords) {
    World w(4);
    Node a = w.node(0, small());
    a.begin_round(1, at(1));
    EXPECT_TRUE(a.end_round_flag());
}

TEST(Node, EpochWindowAndDenyListPurge) {
    ProtocolParams p;
    World w(8, p);
    Node a = w.node(0, small());
    a.begin_round(1, at(1));
    const auto old_rec = w.peer(1, 1, at(1));
    auto proof = detect_duplicate_commit(*w.peer(3, 5, at(1), {{w.commit(3, 1, 1), 1}, {w.commit(3, 1, 2), 1}}));
    Response resp;
    resp.slash_proofs.push_back(std::make_shared<const SlashProof>(*proof));
    a.handle_response(resp, at(1, 30));
    ASSERT_TRUE(a.deny_list().contains(w.keys[3].net_pk));

    // Three boundaries with a changing active set; window d = 2.
    for (int e = 0; e < 3; ++e) {
        const auto extra = derive_identity(Rng(77, {static_cast<std::uint64_t>(e)}).bytes<32>());
        ASSERT_EQ(w.chain->deposit_and_stake(extra.stake_id, 1, 100 + e), ContractStatus::ok);
        const auto ev = w.chain->advance_clock(p.epoch_length);
        ASSERT_EQ(ev.size(), 1u);
        a.epoch_transition(ev[0].commitment, w.chain->get_proof(w.keys[0].stake_id));
        EXPECT_LE(a.acc_coms().size(), p.commitment_window);
    }
    const Timestamp now = old_rec->net_rec->ts + 10;
    EXPECT_EQ(validate_net_rec(w.dir, *old_rec->net_rec, a.acc_coms(), now, p.record_expiry), RecordError::stale_commitment);
    EXPECT_FALSE(a.deny_list().contains(w.keys[3].net_pk));
    EXPECT_FALSE(a.stalled());
    // The node's new attestation verifies against the new root.
    const auto self = a.self_record(now);
    EXPECT_EQ(validate_net_rec(w.dir, *self->net_rec, a.acc_coms(), now, p.record_expiry), RecordError::ok);
}

TEST(Node, OverlayDegree) {
    World w(401);
    NodeConfig c = big();
    Node all = w.node(0, c);
    for (std::size_t i = 1; i <= 400; ++i) all.add_bootstrap(w.peer(i, i, 0));
    Rng rng(3);
    EXPECT_EQ(all.build_overlay(rng).size(), 400u);

    c.overlay_prob = 0.125;
    Node part = w.node(0, c);
    for (std::size_t i = 1; i <= 400; ++i) part.add_bootstrap(w.peer(i, i, 0));
    double sum = 0;
    for (int k = 0; k < 1000; ++k) {
        const auto nb = part.build_overlay(rng);
        sum += static_cast<double>(nb.size());
        for (const auto& pk : nb) ASSERT_TRUE(part.t_priv().contains(pk));
    }
    EXPECT_GE(sum / 1000, 45.0);
    EXPECT_LE(sum / 1000, 55.0);
}

TEST(Node, ViolatorBatches) {
    World w(60);
    Node v = w.node(0, small());
    std::vector<std::pair<Digest, AddressToken>> known;
    for (std::size_t i = 1; i < 60; ++i) known.emplace_back(w.keys[i].net_pk, i);
    EXPECT_THROW(v.violator_begin_round(1, at(1), 1, known), std::invalid_argument);
    const auto batches = v.violator_begin_round(1, at(1), 2, known);
    ASSERT_EQ(batches.size(), 2u);
    EXPECT_NE(batches[0].req_com, batches[1].req_com);
    EXPECT_EQ(batches[0].requests.size(), small().slice_size());

    // A responder that sees one request from each batch catches the double
    // commitment once both reach the same table.
    std::size_t who = 0;
    for (std::size_t i = 1; i < 60 && !who; ++i) {
        const Node probe = w.node(i, small());
        const double t = small().slice_threshold();
        if (prng_score(probe.nu(), w.keys[0].net_pk) < t || prng_score(probe.eta(), w.keys[0].net_pk) < t) who = i;
    }
    ASSERT_NE(who, 0u);
    Node r = w.node(who, small());
    for (const auto& b : batches)
        for (const auto& o : b.requests) r.accept(*o.request, at(1, 30));
    EXPECT_TRUE(r.deny_list().contains(w.keys[0].net_pk));
}

TEST(Node, RecentRequestsCollected) {
    World w(4);
    Node a = w.node(0, small()), b = w.node(1, small());
    a.add_bootstrap(w.peer(1, 1, 0));
    for (Round r = 1; r <= 5; ++r) {
        const auto batch = a.begin_round(r, at(r));
        ASSERT_EQ(batch.requests.size(), 1u);
        b.respond(*batch.requests[0].request, at(r, 30));
        EXPECT_LE(b.recent_request_rounds(), 2u);
    }
}
