#pragma once

// Simulated staking contract with an epoch clock. Every stake is one unit.
// Stake changes are queued and applied at epoch boundaries, where the
// contract re-commits to the ordered list of active StakeIDs.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "aetherweave/bytes.hpp"
#include "aetherweave/field.hpp"
#include "aetherweave/identity.hpp"
#include "aetherweave/merkle.hpp"
#include "aetherweave/records.hpp"

namespace aetherweave {

using Duration = std::int64_t;  // milliseconds
using Account = std::uint64_t;
using Epoch = std::int64_t;

struct ProtocolParams {
    Duration epoch_length = 20'000;
    Duration freeze = 2'000;            // Δ_freeze
    Duration withdraw_delay = 4'000;    // Δ_withdraw
    Duration record_expiry = 6'000;     // Δ_exp
    std::size_t commitment_window = 2;  // d
    Duration round_length = 2'000;

    void validate() const {
        if (epoch_length <= 0 || round_length <= 0) throw std::invalid_argument("epoch and round length must be positive");
        if (freeze < 0 || freeze >= epoch_length) throw std::invalid_argument("freeze must be in [0, epoch_length)");
        if (withdraw_delay < 0 || withdraw_delay >= epoch_length)
            throw std::invalid_argument("withdraw_delay must be in [0, epoch_length)");
        if (commitment_window < 1) throw std::invalid_argument("commitment window d must be >= 1");
        if (record_expiry <= 0) throw std::invalid_argument("record expiry must be positive");
    }
};

enum class ContractStatus {
    ok,
    wrong_amount,
    already_owned,
    inside_freeze_window,
    not_owner,
    no_deposit,
    too_early,
    bad_preimage,
    nothing_to_slash,
};

constexpr std::string_view to_string(ContractStatus s) noexcept {
    switch (s) {
        case ContractStatus::ok: return "ok";
        case ContractStatus::wrong_amount: return "wrong-amount";
        case ContractStatus::already_owned: return "already-owned";
        case ContractStatus::inside_freeze_window: return "inside-freeze-window";
        case ContractStatus::not_owner: return "not-owner";
        case ContractStatus::no_deposit: return "no-deposit";
        case ContractStatus::too_early: return "too-early";
        case ContractStatus::bad_preimage: return "bad-preimage";
        case ContractStatus::nothing_to_slash: return "nothing-to-slash";
    }
    return "unknown";
}

struct ClaimResult {
    ContractStatus status = ContractStatus::ok;
    std::uint64_t units = 0;
};

struct StakeOpening {
    MerkleProof proof;
    std::uint64_t index = 0;
};

struct BoundaryEvent {
    Epoch epoch = 0;  // the epoch that starts at this boundary
    Timestamp time = 0;
    MerkleCommitment commitment;
};

class ContractState {
public:
    explicit ContractState(ProtocolParams params) : params_(params) {
        params_.validate();
        rebuild_commitment();
    }

    /// Contract whose first epoch already contains `stakers` (in order).
    static ContractState with_genesis(ProtocolParams params, const std::vector<std::pair<Digest, Account>>& stakers) {
        ContractState st(params);
        for (const auto& [id, account] : stakers) {
            if (st.owner_.contains(id)) throw std::invalid_argument("duplicate genesis staker");
            st.deposits_[id] = true;
            st.owner_[id] = account;
            st.index_of_[id] = st.active_.size();
            st.active_.push_back(id);
            ++st.units_deposited_;
        }
        st.rebuild_commitment();
        return st;
    }

    const ProtocolParams& params() const noexcept { return params_; }
    Epoch epoch() const noexcept { return epoch_; }
    Timestamp clock() const noexcept { return clock_; }
    Timestamp epoch_start() const noexcept { return (epoch_ - 1) * params_.epoch_length; }
    Timestamp epoch_end() const noexcept { return epoch_ * params_.epoch_length; }

    ContractStatus deposit_and_stake(const Digest& stake_id, std::uint64_t funds, Account account) {
        if (funds != 1) return ContractStatus::wrong_amount;
        if (owner_.contains(stake_id)) return ContractStatus::already_owned;
        if (!before_freeze()) return ContractStatus::inside_freeze_window;
        if (!pending_removes_.erase(stake_id)) pending_adds_.insert(stake_id);
        deposits_[stake_id] = true;
        owner_[stake_id] = account;
        ++units_deposited_;
        return ContractStatus::ok;
    }

    ContractStatus unstake(const Digest& stake_id, Account account) {
        if (!has_deposit(stake_id)) return ContractStatus::no_deposit;
        if (owner_.at(stake_id) != account) return ContractStatus::not_owner;
        if (!before_freeze()) return ContractStatus::inside_freeze_window;
        withdrawal_epoch_[stake_id] = epoch_;
        deposits_[stake_id] = false;
        queue_removal(stake_id);
        return ContractStatus::ok;
    }

    ClaimResult claim_funds(const Digest& stake_id, Account account) {
        auto owner = owner_.find(stake_id);
        if (owner == owner_.end()) return {ContractStatus::no_deposit, 0};
        if (owner->second != account) return {ContractStatus::not_owner, 0};
        const Epoch requested = withdrawal_epoch(stake_id);
        if (!(requested > 0 && requested < epoch_)) return {ContractStatus::too_early, 0};
        if (clock_ < epoch_start() + params_.withdraw_delay) return {ContractStatus::too_early, 0};
        withdrawal_epoch_.erase(stake_id);
        owner_.erase(owner);
        ++units_claimed_;
        return {ContractStatus::ok, 1};
    }

    ContractStatus slash(FieldElement stake_sk, const Digest& stake_id) {
        if (hash_stake_id(stake_sk) != stake_id) return ContractStatus::bad_preimage;
        if (!has_deposit(stake_id) && withdrawal_epoch(stake_id) <= 0) return ContractStatus::nothing_to_slash;
        deposits_[stake_id] = false;
        queue_removal(stake_id);
        withdrawal_epoch_.erase(stake_id);
        owner_.erase(stake_id);
        ++units_slashed_;
        return ContractStatus::ok;
    }

    /// Opening of `stake_id` against the current commitment, if active.
    std::optional<StakeOpening> get_proof(const Digest& stake_id) const {
        auto it = index_of_.find(stake_id);
        if (it == index_of_.end()) return std::nullopt;
        return StakeOpening{tree_->open(it->second), it->second};
    }

    const MerkleCommitment& get_commitment() const noexcept { return commitment_; }

    /// Moves the clock forward, applying every epoch boundary crossed.
    std::vector<BoundaryEvent> advance_clock(Duration dt) {
        if (dt < 0) throw std::invalid_argument("advance_clock: negative dt");
        std::vector<BoundaryEvent> events;
        const Timestamp target = clock_ + dt;
        while (epoch_end() <= target) {
            clock_ = epoch_end();
            apply_pending();
            ++epoch_;
            events.push_back({epoch_, clock_, commitment_});
        }
        clock_ = target;
        return events;
    }

    bool is_active(const Digest& stake_id) const { return index_of_.contains(stake_id); }
    const std::vector<Digest>& active_set() const noexcept { return active_; }
    std::size_t pending_adds() const noexcept { return pending_adds_.size(); }
    std::size_t pending_removes() const noexcept { return pending_removes_.size(); }

    bool has_deposit(const Digest& stake_id) const {
        auto it = deposits_.find(stake_id);
        return it != deposits_.end() && it->second;
    }
    Epoch withdrawal_epoch(const Digest& stake_id) const {
        auto it = withdrawal_epoch_.find(stake_id);
        return it == withdrawal_epoch_.end() ? 0 : it->second;
    }
    std::optional<Account> owner(const Digest& stake_id) const {
        auto it = owner_.find(stake_id);
        if (it == owner_.end()) return std::nullopt;
        return it->second;
    }

    std::uint64_t units_deposited() const noexcept { return units_deposited_; }
    std::uint64_t units_claimed() const noexcept { return units_claimed_; }
    std::uint64_t units_slashed() const noexcept { return units_slashed_; }

    /// Units either staked or waiting out the withdrawal delay.
    std::uint64_t units_locked() const {
        std::uint64_t n = 0;
        for (const auto& [id, acct] : owner_)
            if (has_deposit(id) || withdrawal_epoch(id) > 0) ++n;
        return n;
    }

    /// One-line debug dump: epoch, active count, pending counts, root.
    std::string snapshot() const {
        std::ostringstream os;
        os << "epoch=" << epoch_ << " clock=" << clock_ << " active=" << active_.size()
           << " pending_adds=" << pending_adds_.size() << " pending_removes=" << pending_removes_.size()
           << " root=" << to_hex(commitment_.root.view());
        return os.str();
    }

private:
    bool before_freeze() const noexcept { return clock_ < epoch_end() - params_.freeze; }

    void queue_removal(const Digest& stake_id) {
        if (pending_adds_.erase(stake_id)) return;
        if (index_of_.contains(stake_id)) pending_removes_.insert(stake_id);
    }

    void apply_pending() {
        if (!pending_removes_.empty()) {
            std::erase_if(active_, [&](const Digest& d) { return pending_removes_.contains(d); });
            pending_removes_.clear();
        }
        // std::set keeps the order of newly added leaves deterministic.
        for (const auto& d : pending_adds_) active_.push_back(d);
        pending_adds_.clear();
        index_of_.clear();
        for (std::size_t i = 0; i < active_.size(); ++i) index_of_[active_[i]] = i;
        rebuild_commitment();
    }

    void rebuild_commitment() {
        if (active_.empty()) {
            tree_.reset();
            commitment_ = {};
        } else {
            tree_.emplace(active_);
            commitment_ = tree_->commitment();
        }
    }

    ProtocolParams params_;
    Epoch epoch_ = 1;
    Timestamp clock_ = 0;

    std::unordered_map<Digest, bool, DigestHash> deposits_;
    std::unordered_map<Digest, Account, DigestHash> owner_;
    std::unordered_map<Digest, Epoch, DigestHash> withdrawal_epoch_;

    std::vector<Digest> active_;
    std::unordered_map<Digest, std::uint64_t, DigestHash> index_of_;
    std::set<Digest> pending_adds_;
    std::set<Digest> pending_removes_;

    std::optional<MerkleTree> tree_;
    MerkleCommitment commitment_;

    std::uint64_t units_deposited_ = 0;
    std::uint64_t units_claimed_ = 0;
    std::uint64_t units_slashed_ = 0;
};

}  // namespace aetherweave
