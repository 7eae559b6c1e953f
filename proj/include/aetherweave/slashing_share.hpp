#pragma once

// Per-round slashing shares. A share is a point on the line
//     share = a * req_com + stake_sk
// whose slope a = H_share(sk, round) changes every round. One point reveals
// nothing about the intercept; two points with distinct req_com in the same
// round determine it.

#include <stdexcept>

#include "aetherweave/field.hpp"
#include "aetherweave/identity.hpp"
#include "aetherweave/merkle.hpp"

namespace aetherweave {

class DegenerateShares : public std::invalid_argument {
public:
    DegenerateShares() : std::invalid_argument("share recovery needs two distinct commitments") {}
};

/// ReqCom interpreted as a field element: the 32-byte root reduced mod q.
inline FieldElement commitment_to_field(const MerkleCommitment& c) { return FieldElement::from_bytes(c.root.view()); }

template <class F>
constexpr F share_from_slope(F slope, F stake_sk, F req_com) {
    return slope * req_com + stake_sk;
}

inline FieldElement share_compute(const MasterSecret& sk, FieldElement stake_sk, std::int64_t round,
                                  FieldElement req_com) {
    return share_from_slope(hash_share_slope(sk, round), stake_sk, req_com);
}

/// Recovers the intercept of the line through (c1, s1) and (c2, s2).
template <class F>
constexpr F share_recover(F c1, F s1, F c2, F s2) {
    if (c1 == c2) throw DegenerateShares();
    const F slope = (s1 - s2) / (c1 - c2);
    return s1 - slope * c1;
}

}  // namespace aetherweave
