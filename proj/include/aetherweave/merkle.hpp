#pragma once

// Merkle-tree vector commitment. Leaves are padded to the next power of two
// with an all-zero sentinel item; leaf and interior hashes use distinct
// domain tags.

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "aetherweave/bytes.hpp"
#include "aetherweave/hash.hpp"

namespace aetherweave {

struct MerkleCommitment {
    Digest root;
    std::uint64_t size = 0;

    friend bool operator==(const MerkleCommitment&, const MerkleCommitment&) = default;
};

struct MerkleProof {
    std::uint64_t index = 0;
    std::vector<Digest> path;  // sibling digests, leaf level first

    friend bool operator==(const MerkleProof&, const MerkleProof&) = default;
};

/// Number of sibling hashes in an opening for a vector of `size` items.
constexpr std::size_t merkle_depth(std::uint64_t size) noexcept {
    return size <= 1 ? 0 : static_cast<std::size_t>(std::bit_width(size - 1));
}

inline Digest merkle_leaf_hash(const Digest& item) { return hash_bytes(Domain::merkle_leaf, item.view()); }

/// The auxiliary tree kept by the committer: every level, leaves first.
class MerkleTree {
public:
    MerkleTree() = default;

    explicit MerkleTree(const std::vector<Digest>& items) : size_(items.size()) {
        if (items.empty()) throw std::invalid_argument("cannot commit to an empty vector");
        const std::size_t width = std::size_t{1} << merkle_depth(size_);
        std::vector<Digest> level;
        level.reserve(width);
        for (const auto& item : items) level.push_back(merkle_leaf_hash(item));
        const Digest sentinel = merkle_leaf_hash(Digest{});
        level.resize(width, sentinel);
        levels_.push_back(std::move(level));
        while (levels_.back().size() > 1) {
            const auto& below = levels_.back();
            std::vector<Digest> up(below.size() / 2);
            for (std::size_t i = 0; i < up.size(); ++i) up[i] = hash_pair(Domain::merkle_node, below[2 * i], below[2 * i + 1]);
            levels_.push_back(std::move(up));
        }
    }

    MerkleCommitment commitment() const { return {levels_.back().front(), size_}; }
    std::uint64_t size() const noexcept { return size_; }

    MerkleProof open(std::uint64_t index) const {
        if (index >= size_) throw std::out_of_range("merkle opening index out of range");
        MerkleProof proof;
        proof.index = index;
        proof.path.reserve(levels_.size() - 1);
        std::uint64_t pos = index;
        for (std::size_t lvl = 0; lvl + 1 < levels_.size(); ++lvl) {
            proof.path.push_back(levels_[lvl][pos ^ 1]);
            pos >>= 1;
        }
        return proof;
    }

private:
    std::uint64_t size_ = 0;
    std::vector<std::vector<Digest>> levels_;
};

/// Commits to `items`, returning the public commitment and the aux tree.
inline std::pair<MerkleCommitment, MerkleTree> vec_commit(const std::vector<Digest>& items) {
    MerkleTree tree(items);
    auto c = tree.commitment();
    return {c, std::move(tree)};
}

inline MerkleProof vec_open(const MerkleTree& tree, std::uint64_t index) { return tree.open(index); }

inline bool vec_verify(const MerkleCommitment& c, std::uint64_t index, const Digest& item, const MerkleProof& proof) {
    if (index != proof.index || index >= c.size) return false;
    if (proof.path.size() != merkle_depth(c.size)) return false;
    Digest acc = merkle_leaf_hash(item);
    std::uint64_t pos = index;
    for (const auto& sibling : proof.path) {
        acc = (pos & 1) ? hash_pair(Domain::merkle_node, sibling, acc) : hash_pair(Domain::merkle_node, acc, sibling);
        pos >>= 1;
    }
    return acc == c.root;
}

}  // namespace aetherweave
