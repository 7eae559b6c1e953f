#pragma once

// Closed-form and Monte Carlo analysis: mean-field recurrences for table
// quality and visibility, binomial detection-error probabilities, and the
// omniscient cut attack.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "aetherweave/parallel.hpp"
#include "aetherweave/rng.hpp"

namespace aetherweave::analysis {

struct DefaultParameters {
    double phi;    // critical partition fraction (1+α)/2
    double theta;  // φ + 2ε = (5+α)/6
    double eps;    // (1−α)/6
};

inline DefaultParameters default_parameters(double alpha) {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in [0,1)");
    return {(1.0 + alpha) / 2.0, (5.0 + alpha) / 6.0, (1.0 - alpha) / 6.0};
}

struct AnalysisParams {
    double n = 10000;
    double s = 4;
    double alpha = 0;
    double gamma = 0.9;
    double theta = 0.75;
    double delta = 0.25;
    double eps_sec = 1.0 / 6.0;
    double phi = 0.5;
    double kappa = 0;
    double overlay_degree = 100;

    /// Fills φ and ε from α; θ, γ and the rest keep their values.
    static AnalysisParams with_alpha(double n, double s, double alpha) {
        AnalysisParams p;
        p.n = n;
        p.s = s;
        p.alpha = alpha;
        const auto d = default_parameters(alpha);
        p.phi = d.phi;
        p.eps_sec = d.eps;
        return p;
    }

    double sqrt_n() const { return std::sqrt(n); }
    double slice_prob() const { return s / sqrt_n(); }   // s/√n
    double slice_size() const { return s * sqrt_n(); }   // s√n

    void validate() const {
        if (!(n >= 1)) throw std::invalid_argument("n must be >= 1");
        if (!(s > 0)) throw std::invalid_argument("s must be positive");
        if (!(alpha >= 0 && alpha < 1)) throw std::invalid_argument("alpha must be in [0,1)");
        if (slice_prob() > 1) throw std::invalid_argument("s/sqrt(n) must be <= 1");
    }

    /// φ < θ < γ, required by the detection analysis.
    void validate_detection() const {
        validate();
        if (!(phi < theta && theta < gamma)) throw std::invalid_argument("need phi < theta < gamma");
        if (gamma > 1) throw std::invalid_argument("gamma must be <= 1");
    }
};

// Mean field -----------------------------------------------------------------

/// q' = 1 − (1 − (s/√n) q)^(s√n q (1−α) + 1)
inline double mf_quality_step(double q, const AnalysisParams& p) {
    const double e = p.slice_size() * q * (1.0 - p.alpha) + 1.0;
    return -std::expm1(e * std::log1p(-p.slice_prob() * q));
}

/// v' = (s/√n)(1 − (1 − v)^(s√n (1−α)))
inline double mf_visibility_step(double v, const AnalysisParams& p) {
    if (v >= 1.0) return p.slice_prob();
    return -p.slice_prob() * std::expm1(p.slice_size() * (1.0 - p.alpha) * std::log1p(-v));
}

inline double r0(const AnalysisParams& p) { return p.s * p.s * (1.0 - p.alpha); }

inline double r0_threshold_s(double alpha) {
    if (!(alpha < 1.0)) throw std::invalid_argument("alpha must be < 1");
    return 1.0 / std::sqrt(1.0 - alpha);
}

inline constexpr double kFixedPointTol = 1e-12;
inline constexpr std::size_t kMaxIterations = 1'000'000;

/// Iterates `step` from x0 until |x' − x| < tol (or the iteration cap).
template <class Step>
double iterate_to_fixed_point(Step&& step, double x0, double tol) {
    double x = x0;
    for (std::size_t i = 0; i < kMaxIterations; ++i) {
        const double y = step(x);
        if (std::abs(y - x) < tol) return y;
        x = y;
    }
    return x;
}

template <class Step>
std::vector<double> trajectory(Step&& step, double x0, std::size_t steps) {
    std::vector<double> out{x0};
    out.reserve(steps + 1);
    for (std::size_t i = 0; i < steps; ++i) out.push_back(step(out.back()));
    return out;
}

class NoPositiveFixedPoint : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

struct QualityFixedPoints {
    double q_thresh;
    double q_high;
};

/// q_high by iteration from 1; q_thresh by bisection of q' − q over
/// [1/(s√n), q_high − 1e−9]. Throws NoPositiveFixedPoint when R₀ <= 1 or the
/// iteration collapses to zero.
inline QualityFixedPoints mf_quality_fixed_points(const AnalysisParams& p, double tol = kFixedPointTol) {
    p.validate();
    if (r0(p) <= 1.0) throw NoPositiveFixedPoint("R0 <= 1: only q = 0 is stable");
    const auto step = [&](double q) { return mf_quality_step(q, p); };
    const double q_high = iterate_to_fixed_point(step, 1.0, tol);
    double lo = 1.0 / p.slice_size(), hi = q_high - 1e-9;
    if (!(q_high > lo) || hi <= lo) throw NoPositiveFixedPoint("quality iteration from 1 collapses to 0");
    const auto g = [&](double q) { return step(q) - q; };
    if (g(lo) >= 0 || g(hi) <= 0) throw NoPositiveFixedPoint("no sign change below q_high");
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        (g(mid) < 0 ? lo : hi) = mid;
    }
    return {0.5 * (lo + hi), q_high};
}

/// Fixed point of the visibility recurrence iterated from v = s/√n.
inline double mf_visibility_fixed_point(const AnalysisParams& p, double tol = kFixedPointTol) {
    p.validate();
    if (r0(p) <= 1.0) return 0.0;
    return iterate_to_fixed_point([&](double v) { return mf_visibility_step(v, p); }, p.slice_prob(), tol);
}

struct MeanFieldResult {
    double q_thresh = std::numeric_limits<double>::quiet_NaN();
    double q_high = std::numeric_limits<double>::quiet_NaN();
    double v_high = 0;
    double r0 = 0;
    bool positive = false;  // false when only q = 0 is stable
};

inline MeanFieldResult mean_field(const AnalysisParams& p, double tol = kFixedPointTol) {
    MeanFieldResult out;
    out.r0 = r0(p);
    out.v_high = mf_visibility_fixed_point(p, tol);
    try {
        const auto fp = mf_quality_fixed_points(p, tol);
        out.q_thresh = fp.q_thresh;
        out.q_high = fp.q_high;
        out.positive = true;
    } catch (const NoPositiveFixedPoint&) {
    }
    return out;
}

// Detection errors -------------------------------------------------------------

inline double log_choose(double n, double k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

inline double log_binom_pmf(std::int64_t n, double p, std::int64_t k) {
    const auto nd = static_cast<double>(n), kd = static_cast<double>(k);
    return log_choose(nd, kd) + kd * std::log(p) + (nd - kd) * std::log1p(-p);
}

/// log P[Binomial(n, p) <= k] (upper = false) or log P[Binomial(n, p) > k]
/// (upper = true), summed in log space. Terms far past the mode are cut once
/// they drop below 1e−40 of the largest term seen.
inline double log_binom_tail(std::int64_t n, double p, std::int64_t k, bool upper) {
    constexpr double kCut = -92.0;  // ln 1e-40
    const double ninf = -std::numeric_limits<double>::infinity();
    std::int64_t lo = upper ? k + 1 : 0, hi = upper ? n : k;
    lo = std::max<std::int64_t>(lo, 0);
    hi = std::min(hi, n);
    if (lo > hi) return ninf;
    const double mode = std::floor((static_cast<double>(n) + 1.0) * p);
    // Walk away from the end nearest the mode so the cut only ever drops
    // the shrinking side.
    const bool down = !upper;
    double peak = ninf, acc = 0.0;  // acc = Σ exp(term − peak)
    for (std::int64_t i = 0; i <= hi - lo; ++i) {
        const std::int64_t j = down ? hi - i : lo + i;
        const double t = log_binom_pmf(n, p, j);
        if (t > peak) {
            acc = acc * std::exp(peak - t) + 1.0;
            peak = t;
        } else {
            acc += std::exp(t - peak);
        }
        const bool past_mode = down ? static_cast<double>(j) < mode : static_cast<double>(j) > mode;
        if (past_mode && t - peak < kCut) break;
    }
    return peak + std::log(acc);
}

struct DetectionErrors {
    double fp_exact;
    double fn_exact;
    double fp_chernoff;
    double fn_chernoff;
};

/// fp = P[Bin(⌊γn⌋, s/√n) <= ⌊θ s√n⌋], fn = P[Bin(⌊φn⌋, s/√n) > ⌊θ s√n⌋].
inline DetectionErrors detection_error_probs(const AnalysisParams& p) {
    p.validate_detection();
    const double q = p.slice_prob(), m = p.slice_size();
    const auto kt = static_cast<std::int64_t>(std::floor(p.theta * m));
    const auto ng = static_cast<std::int64_t>(std::floor(p.gamma * p.n));
    const auto nf = static_cast<std::int64_t>(std::floor(p.phi * p.n));
    DetectionErrors e{};
    e.fp_exact = std::exp(log_binom_tail(ng, q, kt, false));
    e.fn_exact = std::exp(log_binom_tail(nf, q, kt, true));
    e.fp_chernoff = std::exp(-m * (p.gamma - p.theta) * (p.gamma - p.theta) / (2.0 * p.gamma));
    e.fn_chernoff = std::exp(-m * (p.theta - p.phi) * (p.theta - p.phi) / (p.theta + p.phi));
    return e;
}

/// Root θ ∈ (φ, γ) of (γ−θ)²/(2γ) = (θ−φ)²/(θ+φ).
inline double balanced_theta(const AnalysisParams& p) {
    if (!(p.phi < p.gamma)) throw std::invalid_argument("need phi < gamma");
    const auto f = [&](double t) {
        return (p.gamma - t) * (p.gamma - t) / (2.0 * p.gamma) - (t - p.phi) * (t - p.phi) / (t + p.phi);
    };
    double lo = p.phi, hi = p.gamma;  // f(lo) > 0 > f(hi)
    for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) > 0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// Cut attack -----------------------------------------------------------------

/// Success condition on the number of unflagged side-A nodes.
enum class NoFlagRule {
    delta_fraction,          // noflag >= δk
    one_minus_delta_fraction  // noflag >= (1−δ)k
};

struct CutTrial {
    std::size_t noflag_count = 0;
    bool disconnected = true;
    bool success = false;
    double success_prob = 0;  // P[success | slice counts], over overlay draws
};

inline std::size_t required_noflag(std::size_t k, double delta, NoFlagRule rule) {
    const double f = rule == NoFlagRule::delta_fraction ? delta : 1.0 - delta;
    return static_cast<std::size_t>(std::ceil(f * static_cast<double>(k) - 1e-12));
}

/// One trial for a cut with |A| = k. Each A node sees X_A ~ Bin(⌊k+αn⌋, s/√n)
/// records it cannot be denied and X_B ~ Bin(⌊(1−α)n⌋−k, s/√n) from B. The
/// adversary withholds every B record except, for nodes it keeps unflagged
/// with X_A < θs√n, the ⌈θs√n − X_A⌉ it must deliver; each delivered B entry
/// is an overlay edge with probability overlay_degree/(s√n). It keeps the
/// cheapest nodes needed to reach the target and no more.
inline CutTrial cut_attack_trial(const AnalysisParams& p, std::size_t k, Rng& rng,
                                 NoFlagRule rule = NoFlagRule::delta_fraction) {
    p.validate();
    const auto honest = static_cast<std::int64_t>(std::floor((1.0 - p.alpha) * p.n));
    if (k < 1 || static_cast<std::int64_t>(k) > honest / 2) throw std::invalid_argument("k out of range");
    const double q = p.slice_prob(), thr = p.theta * p.slice_size();
    const double edge = std::min(1.0, std::max(0.0, p.overlay_degree / p.slice_size()));
    const auto na = static_cast<std::int64_t>(std::floor(static_cast<double>(k) + p.alpha * p.n));
    const std::int64_t nb = honest - static_cast<std::int64_t>(k);
    std::binomial_distribution<std::int64_t> draw_a(na, q), draw_b(nb, q);

    std::size_t free_nodes = 0;
    std::vector<std::int64_t> needs;  // B entries required to keep a node unflagged
    for (std::size_t i = 0; i < k; ++i) {
        const auto xa = static_cast<double>(draw_a(rng));
        const auto xb = draw_b(rng);
        if (xa >= thr) {
            ++free_nodes;
            continue;
        }
        const auto need = static_cast<std::int64_t>(std::ceil(thr - xa));
        if (xb >= need) needs.push_back(need);
    }
    std::sort(needs.begin(), needs.end());
    const std::size_t target = required_noflag(k, p.delta, rule);
    const std::size_t extra = target > free_nodes ? target - free_nodes : 0;
    const std::size_t kept = std::min(extra, needs.size());

    CutTrial out;
    out.noflag_count = free_nodes + kept;
    double log_keep = 0.0;
    for (std::size_t i = 0; i < kept; ++i) {
        if (edge > 0) {
            std::binomial_distribution<std::int64_t> cross(needs[i], edge);
            if (cross(rng) > 0) out.disconnected = false;
        }
        log_keep += static_cast<double>(needs[i]) * std::log1p(-std::min(edge, 1.0 - 1e-300));
    }
    const bool enough = out.noflag_count >= target;
    out.success = enough && out.disconnected;
    out.success_prob = enough ? (edge >= 1.0 && kept > 0 ? 0.0 : std::exp(log_keep)) : 0.0;
    return out;
}

struct CutAttackEstimate {
    std::size_t trials = 0;
    std::size_t successes = 0;   // sampled overlay draws
    double probability = 0;      // mean of the conditional success probability
};

/// Runs `trials` independent trials; trial t draws from Rng(seed, {t}) so the
/// estimate is the same for every worker count and matched across degrees.
inline CutAttackEstimate cut_attack(const AnalysisParams& p, std::size_t k, std::size_t trials, std::uint64_t seed,
                                    NoFlagRule rule = NoFlagRule::delta_fraction, std::size_t workers = 1) {
    std::vector<CutTrial> res(trials);
    parallel_for(trials, workers, [&](std::size_t t) {
        Rng rng(seed, {static_cast<std::uint64_t>(t)});
        res[t] = cut_attack_trial(p, k, rng, rule);
    });
    CutAttackEstimate e;
    e.trials = trials;
    for (const auto& r : res) {
        e.successes += r.success;
        e.probability += r.success_prob;
    }
    if (trials > 0) e.probability /= static_cast<double>(trials);
    return e;
}

/// ln C(|H|, k) with |H| = ⌊(1−α)n⌋: the number of cuts of size k.
inline double log_cut_count(const AnalysisParams& p, std::size_t k) {
    return log_choose(std::floor((1.0 - p.alpha) * p.n), static_cast<double>(k));
}

}  // namespace aetherweave::analysis
