#include <gtest/gtest.h>

#include <cmath>

#include "aetherweave/analysis.hpp"

using namespace aetherweave;
using namespace aetherweave::analysis;

namespace {

AnalysisParams table_params(double n) {
    auto p = AnalysisParams::with_alpha(n, 4, 0.25);
    p.theta = 0.75;
    return p;
}

// Direct summation of every term in long double.
long double slow_tail(std::int64_t n, long double p, std::int64_t k, bool upper) {
    long double sum = 0;
    for (std::int64_t i = 0; i <= n; ++i) {
        if (upper ? i <= k : i > k) continue;
        const long double lc = std::lgamma(static_cast<long double>(n) + 1) - std::lgamma(static_cast<long double>(i) + 1) -
                               std::lgamma(static_cast<long double>(n - i) + 1);
        sum += std::exp(lc + i * std::log(p) + (n - i) * std::log1p(-p));
    }
    return sum;
}

}  // namespace

TEST(MeanField, StepExamples) {
    const auto p = AnalysisParams::with_alpha(10000, 4, 0);
    EXPECT_NEAR(mf_quality_step(0.0, p), 0.0, 1e-15);  // 1 − (1)^1
    // q = 1: 1 − (1 − 0.04)^401
    EXPECT_NEAR(mf_quality_step(1.0, p), 1.0 - std::pow(0.96, 401.0), 1e-12);
    const double q = 0.3;
    EXPECT_NEAR(mf_quality_step(q, p), 1.0 - std::pow(1.0 - 0.04 * q, 400.0 * q + 1.0), 1e-12);
}

TEST(MeanField, StepMonotone) {
    const auto p = AnalysisParams::with_alpha(10000, 2, 1.0 / 3.0);
    double prev = -1;
    for (int i = 0; i <= 1000; ++i) {
        const double y = mf_quality_step(i / 1000.0, p);
        EXPECT_GE(y, prev);
        EXPECT_GE(y, 0.0);
        EXPECT_LE(y, 1.0);
        prev = y;
    }
}

TEST(MeanField, FixedPointsAreFixed) {
    for (double s : {3.0, 4.0, 6.0, 8.0}) {
        const auto p = AnalysisParams::with_alpha(10000, s, 1.0 / 3.0);
        const auto fp = mf_quality_fixed_points(p);
        EXPECT_LT(fp.q_thresh, fp.q_high);
        EXPECT_NEAR(mf_quality_step(fp.q_high, p), fp.q_high, 1e-10) << s;
        EXPECT_NEAR(mf_quality_step(fp.q_thresh, p), fp.q_thresh, 1e-9) << s;
    }
}

TEST(MeanField, Basins) {
    const auto p = AnalysisParams::with_alpha(10000, 4, 1.0 / 3.0);
    const auto fp = mf_quality_fixed_points(p);
    const auto step = [&](double q) { return mf_quality_step(q, p); };
    EXPECT_NEAR(iterate_to_fixed_point(step, fp.q_thresh * 1.05, 1e-14), fp.q_high, 1e-9);
    EXPECT_LT(iterate_to_fixed_point(step, fp.q_thresh * 0.95, 1e-14), 1e-6);
    const auto traj = trajectory(step, 0.5, 20);
    ASSERT_EQ(traj.size(), 21u);
    for (std::size_t i = 1; i < traj.size(); ++i) EXPECT_GE(traj[i], traj[i - 1] - 1e-15);
}

TEST(MeanField, KnownValues) {
    const auto r = mean_field(AnalysisParams::with_alpha(10000, 4, 1.0 / 3.0));
    ASSERT_TRUE(r.positive);
    EXPECT_NEAR(r.q_thresh, 0.0945, 5e-4);
    EXPECT_NEAR(r.q_high, 0.99998, 1e-5);
    EXPECT_NEAR(r.v_high, 0.04 * r.q_high, 1e-6);
    EXPECT_NEAR(r.r0, 16.0 * 2.0 / 3.0, 1e-12);
}

TEST(MeanField, VisibilityLinearRegime) {
    // Near v = 0 the step is v' ≈ R0 v.
    const auto p = AnalysisParams::with_alpha(10000, 1.2, 0.5);
    const double h = 1e-9;
    EXPECT_NEAR(mf_visibility_step(h, p) / h, r0(p), 1e-5);
    EXPECT_EQ(mf_visibility_step(0, p), 0.0);
    EXPECT_NEAR(mf_visibility_fixed_point(p), mf_visibility_step(mf_visibility_fixed_point(p), p), 1e-11);
}

TEST(MeanField, SubcriticalCollapses) {
    const auto p = AnalysisParams::with_alpha(10000, 1.0, 0.5);  // R0 = 0.5
    EXPECT_LE(r0(p), 1.0);
    EXPECT_THROW(mf_quality_fixed_points(p), NoPositiveFixedPoint);
    const auto r = mean_field(p);
    EXPECT_FALSE(r.positive);
    EXPECT_TRUE(std::isnan(r.q_high));
    EXPECT_EQ(r.v_high, 0.0);
}

TEST(MeanField, R0Threshold) {
    EXPECT_NEAR(r0(AnalysisParams::with_alpha(100, 2, 0.5)), 2.0, 1e-12);
    EXPECT_NEAR(r0_threshold_s(0.5), std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(r0_threshold_s(0.0), 1.0, 1e-12);
}

TEST(Bounds, TableValues) {
    struct Row {
        double n, fp, fn;
    };
    for (const auto& row : {Row{1e4, 5.135e-4, 7.564e-4}, Row{1e5, 2.818e-9, 2.049e-8}, Row{1e6, 3.282e-25, 1.179e-22}}) {
        const auto e = detection_error_probs(table_params(row.n));
        EXPECT_NEAR(e.fp_exact / row.fp, 1.0, 0.02) << row.n;
        EXPECT_NEAR(e.fn_exact / row.fn, 1.0, 0.02) << row.n;
    }
}

TEST(Bounds, BalancedTheta) {
    const auto p = AnalysisParams::with_alpha(1e4, 4, 0.25);
    const double t = balanced_theta(p);
    EXPECT_NEAR(t, 0.75334, 5e-5);
    EXPECT_GT(t, p.phi);
    EXPECT_LT(t, p.gamma);
    EXPECT_NEAR((p.gamma - t) * (p.gamma - t) / (2 * p.gamma), (t - p.phi) * (t - p.phi) / (t + p.phi), 1e-12);
}

TEST(Bounds, ChernoffDominatesExact) {
    for (double n : {1e3, 1e4, 1e5, 1e6})
        for (double alpha : {0.0, 0.1, 0.25, 0.4})
            for (double s : {2.0, 4.0, 6.0}) {
                auto p = AnalysisParams::with_alpha(n, s, alpha);
                if (p.slice_prob() > 1) continue;
                p.theta = balanced_theta(p);
                const auto e = detection_error_probs(p);
                EXPECT_LE(e.fp_exact, e.fp_chernoff * (1 + 1e-12)) << n << ' ' << alpha << ' ' << s;
                EXPECT_LE(e.fn_exact, e.fn_chernoff * (1 + 1e-12)) << n << ' ' << alpha << ' ' << s;
            }
}

TEST(Bounds, TailMatchesDirectSum) {
    for (std::int64_t n : {10, 50, 200, 900})
        for (double p : {0.05, 0.3, 0.7})
            for (std::int64_t k : {std::int64_t{0}, n / 4, n / 2, n - 1}) {
                for (bool upper : {false, true}) {
                    const long double want = slow_tail(n, p, k, upper);
                    const double got = std::exp(log_binom_tail(n, p, k, upper));
                    if (want < 1e-280L) continue;
                    EXPECT_NEAR(got / static_cast<double>(want), 1.0, 1e-11) << n << ' ' << p << ' ' << k << ' ' << upper;
                }
            }
}

TEST(Bounds, ValidationRejectsBadOrder) {
    auto p = AnalysisParams::with_alpha(1e4, 4, 0.25);
    p.theta = 0.95;
    EXPECT_THROW(detection_error_probs(p), std::invalid_argument);
    p.theta = 0.6;
    EXPECT_THROW(detection_error_probs(p), std::invalid_argument);
}

TEST(Defaults, Identities) {
    for (double a : {0.0, 0.1, 1.0 / 3.0, 0.5, 0.9}) {
        const auto d = default_parameters(a);
        EXPECT_NEAR(d.theta, d.phi + 2 * d.eps, 1e-15);
        EXPECT_NEAR(d.phi, (1 + a) / 2, 1e-15);
    }
    EXPECT_THROW(default_parameters(1.0), std::invalid_argument);
    EXPECT_THROW(default_parameters(-0.1), std::invalid_argument);
}

TEST(CutAttack, RuleThresholds) {
    EXPECT_EQ(required_noflag(1, 0.25, NoFlagRule::delta_fraction), 1u);
    EXPECT_EQ(required_noflag(1, 0.25, NoFlagRule::one_minus_delta_fraction), 1u);
    EXPECT_EQ(required_noflag(8, 0.25, NoFlagRule::delta_fraction), 2u);
    EXPECT_EQ(required_noflag(8, 0.25, NoFlagRule::one_minus_delta_fraction), 6u);
}

TEST(CutAttack, FallsWithDegree) {
    auto p = AnalysisParams::with_alpha(1e4, 4, 0.5);
    p.theta = 0.9;
    double prev = 2.0;
    for (double d : {0.0, 25.0, 50.0, 100.0}) {
        p.overlay_degree = d;
        const double pr = cut_attack(p, 1, 2000, 3).probability;
        EXPECT_LT(pr, prev) << d;
        prev = pr;
    }
}

TEST(CutAttack, ZeroDegreeMeansFlagOnly) {
    auto p = AnalysisParams::with_alpha(1e4, 4, 0.5);
    p.theta = 0.9;
    p.overlay_degree = 0;
    // Success then only needs X_A + X_B >= θs√n, which fails about 2% of the time.
    const auto e = cut_attack(p, 1, 2000, 5);
    EXPECT_NEAR(e.probability, static_cast<double>(e.successes) / 2000.0, 1e-12);
    EXPECT_GT(e.probability, 0.95);
    EXPECT_LT(e.probability, 1.0);
}

TEST(CutAttack, Reproducible) {
    auto p = AnalysisParams::with_alpha(1e4, 4, 0.5);
    p.theta = 0.9;
    p.overlay_degree = 25;
    const auto a = cut_attack(p, 1, 1000, 11, NoFlagRule::delta_fraction, 1);
    const auto b = cut_attack(p, 1, 1000, 11, NoFlagRule::delta_fraction, 3);
    EXPECT_EQ(a.successes, b.successes);
    EXPECT_EQ(a.probability, b.probability);
    EXPECT_NEAR(std::log10(a.probability), std::log10(4.9e-5), 0.3);
}

TEST(CutAttack, KOutOfRange) {
    const auto p = AnalysisParams::with_alpha(100, 2, 0.5);
    Rng rng(1);
    EXPECT_THROW(cut_attack_trial(p, 0, rng), std::invalid_argument);
    EXPECT_THROW(cut_attack_trial(p, 26, rng), std::invalid_argument);
}
