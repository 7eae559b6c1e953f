#include <gtest/gtest.h>

#include "aetherweave/chain.hpp"
#include "aetherweave/identity.hpp"
#include "aetherweave/rng.hpp"

using namespace aetherweave;

namespace {

ProtocolParams params() {
    ProtocolParams p;
    p.epoch_length = 20'000;
    p.freeze = 2'000;
    p.withdraw_delay = 4'000;
    return p;
}

KeyMaterial key(std::uint64_t i) { return derive_identity(Rng(5, {i}).bytes<32>()); }

bool proof_verifies(const ContractState& st, const Digest& id) {
    const auto op = st.get_proof(id);
    return op && vec_verify(st.get_commitment(), op->index, id, op->proof);
}

}  // namespace

TEST(Chain, DepositBecomesActiveNextEpoch) {
    ContractState st(params());
    const auto k = key(1);
    ASSERT_EQ(st.deposit_and_stake(k.stake_id, 1, 7), ContractStatus::ok);
    EXPECT_FALSE(st.is_active(k.stake_id));
    const auto ev = st.advance_clock(20'000);
    ASSERT_EQ(ev.size(), 1u);
    EXPECT_TRUE(st.is_active(k.stake_id));
    EXPECT_TRUE(proof_verifies(st, k.stake_id));
}

TEST(Chain, DepositRules) {
    ContractState st(params());
    const auto k = key(1);
    EXPECT_EQ(st.deposit_and_stake(k.stake_id, 2, 7), ContractStatus::wrong_amount);
    ASSERT_EQ(st.deposit_and_stake(k.stake_id, 1, 7), ContractStatus::ok);
    EXPECT_EQ(st.deposit_and_stake(k.stake_id, 1, 8), ContractStatus::already_owned);
    st.advance_clock(20'000 - 2'000);  // exactly epochEnd − Δ_freeze
    EXPECT_EQ(st.deposit_and_stake(key(2).stake_id, 1, 9), ContractStatus::inside_freeze_window);
}

TEST(Chain, WithdrawalDelay) {
    auto st = ContractState::with_genesis(params(), {{key(1).stake_id, 1}});
    const auto id = key(1).stake_id;
    EXPECT_EQ(st.unstake(id, 2), ContractStatus::not_owner);
    ASSERT_EQ(st.unstake(id, 1), ContractStatus::ok);
    EXPECT_EQ(st.claim_funds(id, 1).status, ContractStatus::too_early);
    st.advance_clock(20'000 + 4'000 - 1);
    EXPECT_FALSE(st.is_active(id));
    EXPECT_EQ(st.claim_funds(id, 1).status, ContractStatus::too_early);
    st.advance_clock(1);
    const auto c = st.claim_funds(id, 1);
    EXPECT_EQ(c.status, ContractStatus::ok);
    EXPECT_EQ(c.units, 1u);
    // Withdrawn and claimed: nothing left to slash.
    EXPECT_EQ(st.slash(key(1).stake_sk, id), ContractStatus::nothing_to_slash);
}

TEST(Chain, SlashDuringDelayWins) {
    auto st = ContractState::with_genesis(params(), {{key(1).stake_id, 1}});
    const auto id = key(1).stake_id;
    ASSERT_EQ(st.unstake(id, 1), ContractStatus::ok);
    st.advance_clock(21'000);
    EXPECT_EQ(st.slash(key(1).stake_sk, id), ContractStatus::ok);
    st.advance_clock(10'000);
    EXPECT_NE(st.claim_funds(id, 1).status, ContractStatus::ok);
    EXPECT_EQ(st.units_slashed(), 1u);
}

TEST(Chain, SlashRemovesFromNextCommitment) {
    auto st = ContractState::with_genesis(params(), {{key(1).stake_id, 1}, {key(2).stake_id, 2}});
    EXPECT_EQ(st.slash(FieldElement(12345), key(1).stake_id), ContractStatus::bad_preimage);
    ASSERT_EQ(st.slash(key(1).stake_sk, key(1).stake_id), ContractStatus::ok);
    EXPECT_TRUE(st.is_active(key(1).stake_id));  // until the boundary
    st.advance_clock(20'000);
    EXPECT_FALSE(st.is_active(key(1).stake_id));
    EXPECT_TRUE(proof_verifies(st, key(2).stake_id));
    EXPECT_EQ(st.active_set().size(), 1u);
}

TEST(Chain, BoundaryEvents) {
    ContractState st(params());
    ASSERT_EQ(st.deposit_and_stake(key(1).stake_id, 1, 1), ContractStatus::ok);
    const auto before = st.get_commitment();
    auto ev = st.advance_clock(20'000);
    ASSERT_EQ(ev.size(), 1u);
    EXPECT_NE(ev[0].commitment.root, before.root);
    const auto root = st.get_commitment();
    ev = st.advance_clock(20'000);
    ASSERT_EQ(ev.size(), 1u);
    EXPECT_EQ(ev[0].commitment, root);
    ev = st.advance_clock(60'000);
    ASSERT_EQ(ev.size(), 3u);
    for (std::size_t i = 1; i < ev.size(); ++i) EXPECT_EQ(ev[i].epoch, ev[i - 1].epoch + 1);
    EXPECT_THROW(st.advance_clock(-1), std::invalid_argument);
}

TEST(Chain, CommitmentMatchesActiveSet) {
    std::vector<std::pair<Digest, Account>> stakers;
    for (std::uint64_t i = 0; i < 37; ++i) stakers.emplace_back(key(i).stake_id, i);
    auto st = ContractState::with_genesis(params(), stakers);
    const auto [c, tree] = vec_commit(st.active_set());
    EXPECT_EQ(c, st.get_commitment());
    for (const auto& [id, acct] : stakers) EXPECT_TRUE(proof_verifies(st, id));
}
