#include <gtest/gtest.h>

#include "aetherweave/analysis.hpp"
#include "aetherweave/simnet.hpp"
#include "aetherweave/wire.hpp"

using namespace aetherweave;

namespace {

SimConfig small(std::size_t n = 100, int rounds = 6) {
    SimConfig c;
    c.n = n;
    c.s = 4;
    c.rounds = rounds;
    c.seed = 7;
    return c;
}

bool same(const RoundMetrics& a, const RoundMetrics& b) {
    return a.round == b.round && a.record_correctness == b.record_correctness && a.table_quality == b.table_quality &&
           a.flag_rate == b.flag_rate && a.honest_repr == b.honest_repr && a.joiner_holders == b.joiner_holders &&
           a.msgs_sent == b.msgs_sent && a.msgs_delivered == b.msgs_delivered && a.bytes_sent == b.bytes_sent;
}

}  // namespace

TEST(Simnet, Deterministic) {
    auto c = small(100, 10);
    const auto a = run(c), b = run(c);
    ASSERT_EQ(a.rounds.size(), b.rounds.size());
    for (std::size_t i = 0; i < a.rounds.size(); ++i) EXPECT_TRUE(same(a.rounds[i], b.rounds[i])) << i;
    EXPECT_EQ(a.respond_status, b.respond_status);
    c.seed = 8;
    const auto d = run(c);
    bool differs = false;
    for (std::size_t i = 0; i < a.rounds.size(); ++i) differs |= !same(a.rounds[i], d.rounds[i]);
    EXPECT_TRUE(differs);
}

TEST(Simnet, HealthyNetwork) {
    const auto m = run(small(400, 6));
    for (const auto& r : m.rounds) {
        EXPECT_EQ(r.record_correctness, 1.0);
        EXPECT_EQ(r.honest_repr, 1.0);
        if (r.round >= 5) EXPECT_GE(r.table_quality, 0.99);
        // Every message is delivered (no interceptors, no churn).
        EXPECT_EQ(r.msgs_dropped, 0u);
    }
    EXPECT_EQ(m.honest_slashed, 0u);
    EXPECT_EQ(m.invalid_slash_proofs, 0u);
    for (std::size_t k = 1; k < kRespondStatusCount; ++k) EXPECT_EQ(m.respond_status[k], 0u) << k;
}

TEST(Simnet, MessagesReconcile) {
    auto c = small(200, 5);
    c.churn_rate = 10;
    const auto m = run(c);
    std::uint64_t sent = 0, done = 0;
    for (const auto& r : m.rounds) {
        sent += r.msgs_sent;
        done += r.msgs_delivered + r.msgs_dropped;
    }
    EXPECT_EQ(sent, done);
}

TEST(Simnet, ChurnLowersCorrectness) {
    auto c = small(200, 4);
    c.churn_rate = 20;
    const auto m = run(c);
    double worst = 1.0;
    for (const auto& r : m.rounds) worst = std::min(worst, r.record_correctness);
    EXPECT_LT(worst, 1.0);
    EXPECT_GT(worst, 0.5);
}

TEST(Simnet, SilentQualityNearMeanField) {
    auto c = small(400, 8);
    c.alpha = 1.0 / 3.0;
    c.adversary = AdversaryKind::silent;
    const auto m = run(c);
    const auto fp = analysis::mf_quality_fixed_points(analysis::AnalysisParams::with_alpha(400, 4, c.alpha));
    double q = 0;
    int k = 0;
    for (const auto& r : m.rounds)
        if (r.round > 3) {
            q += r.table_quality;
            ++k;
        }
    EXPECT_NEAR(q / k, fp.q_high, 0.05);
    EXPECT_NEAR(m.rounds.back().honest_repr, 1.0 - c.alpha, 0.1);
}

TEST(Simnet, FilteringWithoutAdversaries) {
    auto c = small(100, 3);
    c.adversary = AdversaryKind::filtering;
    const auto m = run(c);
    for (const auto& r : m.rounds) EXPECT_EQ(r.honest_repr, 1.0);
}

TEST(Simnet, FilteringRepresentation) {
    auto c = small(400, 6);
    c.alpha = 0.3;
    c.adversary = AdversaryKind::filtering;
    const auto m = run(c);
    EXPECT_NEAR(m.rounds.back().honest_repr, 0.7, 0.1);
}

TEST(Simnet, OversamplerCaughtInRoundOne) {
    int caught = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto c = small(400, 2);
        c.adversary = AdversaryKind::oversampler;
        c.oversample_k = 2;
        c.seed = seed;
        c.stop_on_detection = true;
        Simulation sim(c);
        const auto m = sim.run();
        caught += m.detection_round == 1;
        EXPECT_EQ(m.honest_slashed, 0u);
        if (m.detection_round) EXPECT_EQ(m.violators_slashed_on_chain, m.violators);
    }
    EXPECT_EQ(caught, 10);
}

TEST(Simnet, BootstrapSpreads) {
    auto c = small(400, 6);
    c.bootstrap = true;
    const auto m = run(c);
    EXPECT_LE(m.joiner_holders_initial, 1u);
    EXPECT_GE(m.rounds.back().joiner_holders, static_cast<std::size_t>(0.9 * 80));
}

TEST(Simnet, BootstrapFromSilentAdversaryIsEclipsed) {
    auto c = small(400, 4);
    c.bootstrap = true;
    c.bootstrap_from_adversary = true;
    c.alpha = 0.1;
    c.adversary = AdversaryKind::silent;
    Simulation sim(c);
    const auto m = sim.run();
    for (const auto& r : m.rounds) EXPECT_LE(r.joiner_holders, 2u);
    for (const auto& [round, flag] : sim.node(0).flag_history()) EXPECT_TRUE(flag) << round;
}

TEST(Simnet, PartitionFlagsSmallSide) {
    auto c = small(400, 4);
    c.alpha = 0.25;
    c.adversary = AdversaryKind::partition;
    c.partition_fraction = (0.625 - 0.25) / 0.75;  // A's view |A| + αn = φn
    c.theta = 0.75;
    const auto m = run(c);
    for (const auto& r : m.rounds)
        if (r.round >= 2) EXPECT_GE(r.flag_rate_a, 0.9) << r.round;
}

TEST(Simnet, SingleEclipsedNodeFlags) {
    auto c = small(400, 4);
    c.alpha = 0.25;
    c.adversary = AdversaryKind::partition;
    c.partition_fraction = 1.0 / 300.0;  // one of 300 honest nodes
    const auto m = run(c);
    for (const auto& r : m.rounds)
        if (r.round >= 2) EXPECT_EQ(r.flag_rate_a, 1.0);
}

TEST(Simnet, EtaSaltLeavesTranscriptUnchanged) {
    auto c = small(100, 3);
    c.mode = RetrievalMode::full_table;
    c.transcript_node = 5;
    const auto a = run(c);
    c.eta_salt_node = 5;
    c.eta_salt = 12345;
    const auto b = run(c);
    ASSERT_FALSE(a.transcript.empty());
    EXPECT_EQ(a.transcript, b.transcript);

    // In seed-in-request mode η travels in the request, so the bytes differ.
    auto d = small(100, 2);
    d.transcript_node = 5;
    const auto e = run(d);
    d.eta_salt_node = 5;
    d.eta_salt = 12345;
    EXPECT_NE(e.transcript, run(d).transcript);
}

TEST(Simnet, ConfigValidation) {
    auto c = small();
    c.alpha = 1.0;
    EXPECT_THROW(Simulation{c}, std::invalid_argument);
    c = small();
    c.delay_max = 5000;
    EXPECT_THROW(Simulation{c}, std::invalid_argument);
    c = small();
    c.adversary = AdversaryKind::oversampler;
    c.oversample_k = 1;
    EXPECT_THROW(Simulation{c}, std::invalid_argument);
}
