#pragma once

// Small hand-wired worlds for node and record tests.

#include <memory>
#include <vector>

#include "aetherweave/chain.hpp"
#include "aetherweave/identity.hpp"
#include "aetherweave/node.hpp"
#include "aetherweave/records.hpp"
#include "aetherweave/rng.hpp"

namespace aw_test {

using namespace aetherweave;

struct World {
    ProtocolParams params;
    KeyDirectory dir;
    std::vector<KeyMaterial> keys;
    std::unique_ptr<ContractState> chain;

    explicit World(std::size_t n, ProtocolParams p = {}) : params(p) {
        std::vector<std::pair<Digest, Account>> stakers;
        for (std::size_t i = 0; i < n; ++i) {
            keys.push_back(derive_identity(Rng(1234, {i}).bytes<32>()));
            dir.add(keys.back());
            stakers.emplace_back(keys.back().stake_id, i);
        }
        chain = std::make_unique<ContractState>(ContractState::with_genesis(params, stakers));
    }

    MerkleCommitment com() const { return chain->get_commitment(); }

    StakeAttestation attestation(std::size_t i) const {
        return make_stake_attestation(keys[i], com(), chain->get_proof(keys[i].stake_id)->proof);
    }

    NetRecPtr net_rec(std::size_t i, AddressToken addr, Timestamp ts) const {
        return std::make_shared<const NetRec>(make_net_rec(keys[i], com(), attestation(i), addr, ts));
    }

    /// Request commitment over `recipients` for round r by node i.
    CommitRecPtr commit(std::size_t i, Round r, std::uint64_t salt = 0) const {
        std::vector<Digest> items{keys[(i + 1 + salt) % keys.size()].net_pk, Rng(salt, {99}).bytes<32>()};
        return std::make_shared<const CommitRec>(make_commit_rec(keys[i], r, MerkleTree(items).commitment()));
    }

    PeerRecPtr peer(std::size_t i, AddressToken addr, Timestamp ts, std::vector<CommitEntry> commits = {}) const {
        auto p = std::make_shared<PeerRec>();
        p->net_rec = net_rec(i, addr, ts);
        p->commits.assign(commits.begin(), commits.end());
        normalize_commits(p->commits);
        return p;
    }

    Node node(std::size_t i, NodeConfig cfg, AddressToken addr = 1, std::uint64_t seed = 0) const {
        Node nd(cfg, params, keys[i], addr, dir, seed ? seed : 1000 + i);
        nd.join_epoch(com(), chain->get_proof(keys[i].stake_id));
        return nd;
    }
};

}  // namespace aw_test
