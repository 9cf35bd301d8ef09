#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "churnlens/stats.hpp"
#include "../support/mp_oracle.hpp"

using namespace churnlens;

namespace {

template <typename F>
ErrorCode code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::Internal;
}

}  // namespace

TEST(NormalCdf, KnownValues) {
    EXPECT_EQ(normal_cdf(0.0), 0.5);
    EXPECT_NEAR(normal_cdf(1.959964), 0.975000, 1e-6);
    EXPECT_NEAR(normal_cdf(1.959964), oracle::mp_normal_cdf(1.959964), 1e-15);
}

TEST(NormalCdf, MatchesArbitraryPrecisionOracle) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> z(-8.0, 8.0);
    for (int i = 0; i < 2000; ++i) {
        const double v = z(rng);
        const double ref = oracle::mp_normal_cdf(v);
        ASSERT_LE(std::fabs(normal_cdf(v) - ref), 4e-16 + 1e-14 * ref) << v;
    }
    // Deep tail keeps relative accuracy up to the conditioning of Phi at v,
    // which amplifies the rounding of v itself by about v^2.
    for (const double v : {-20.0, -30.0, -37.0}) {
        const double ref = oracle::mp_normal_cdf(v);
        EXPECT_NEAR(normal_cdf(v) / ref, 1.0, 8e-16 * v * v) << v;
    }
}

TEST(NormalCdf, Symmetry) {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> z(-6.0, 6.0);
    for (int i = 0; i < 1000; ++i) {
        const double v = z(rng);
        ASSERT_NEAR(normal_cdf(-v), 1.0 - normal_cdf(v), 2e-16);
    }
}

TEST(NormalCdf, IncreasingOnGrid) {
    double prev = normal_cdf(-8.0);
    for (double v = -8.0 + 1e-3; v <= 8.0; v += 1e-3) {
        const double cur = normal_cdf(v);
        // Strict until the values saturate at 1 in double.
        if (v < 5.0) {
            ASSERT_GT(cur, prev) << v;
        } else {
            ASSERT_GE(cur, prev) << v;
        }
        prev = cur;
    }
}

TEST(NormalCdf, NonFiniteInputIsAnError) {
    EXPECT_EQ(code_of([] { normal_cdf(std::nan("")); }), ErrorCode::NonFiniteInput);
    EXPECT_EQ(code_of([] { two_sided_p(INFINITY); }), ErrorCode::NonFiniteInput);
}

TEST(TwoSidedP, PublishedPairs) {
    EXPECT_NEAR(two_sided_p(0.23178), 0.8167, 1e-4);
    EXPECT_NEAR(two_sided_p(-0.23178), 0.8167, 1e-4);
    EXPECT_NEAR(two_sided_p(2.2581), 0.0239, 1e-4);
    EXPECT_NEAR(two_sided_p(-2.2581), 0.0239, 1e-4);
    EXPECT_NEAR(two_sided_p(1.411), 0.1582, 1e-4);
    EXPECT_NEAR(two_sided_p(2.597), 0.0094, 2e-4);
    EXPECT_NEAR(two_sided_p(2.597), 0.0093, 2e-4);
}

TEST(TwoSidedP, MatchesOracleAndBounds) {
    EXPECT_EQ(two_sided_p(0.0), 1.0);
    for (double v = 0.0; v < 12.0; v += 0.01) {
        const double p = two_sided_p(v);
        ASSERT_GE(p, 0.0);
        ASSERT_LE(p, 1.0);
        ASSERT_NEAR(p / oracle::mp_two_sided_p(v), 1.0, 1e-13) << v;
    }
}

TEST(ScoreTest, HandEvaluatedCase) {
    const auto r = score_test({600, 1000}, {500, 1000});
    EXPECT_NEAR(r.z, 4.4946, 1e-4);
    EXPECT_NEAR(r.z, oracle::mp_score_z(600, 1000, 500, 1000), 1e-12);
    EXPECT_DOUBLE_EQ(r.pooled_p, 0.55);
    EXPECT_NEAR(r.p_two_sided, oracle::mp_two_sided_p(r.z), 1e-18);
}

TEST(ScoreTest, IdenticalSamples) {
    const auto r = score_test({37, 90}, {37, 90});
    EXPECT_EQ(r.z, 0.0);
    EXPECT_EQ(r.p_two_sided, 1.0);
}

TEST(ScoreTest, Errors) {
    EXPECT_EQ(code_of([] { score_test({0, 10}, {0, 10}); }), ErrorCode::DegeneratePool);
    EXPECT_EQ(code_of([] { score_test({10, 10}, {4, 4}); }), ErrorCode::DegeneratePool);
    EXPECT_EQ(code_of([] { score_test({1, 0}, {0, 10}); }), ErrorCode::InvalidSample);
    EXPECT_EQ(code_of([] { score_test({11, 10}, {0, 10}); }), ErrorCode::InvalidSample);
}

TEST(ScoreTest, RandomCasesMatchOracle) {
    std::mt19937_64 rng(31);
    for (int i = 0; i < 2000; ++i) {
        const std::uint64_t n1 = 1 + rng() % 50000, n2 = 1 + rng() % 50000;
        const std::uint64_t x1 = rng() % (n1 + 1), x2 = rng() % (n2 + 1);
        if (x1 + x2 == 0 || x1 + x2 == n1 + n2) continue;
        const auto r = score_test({x1, n1}, {x2, n2});
        const double ref = oracle::mp_score_z(x1, n1, x2, n2);
        ASSERT_NEAR(r.z, ref, 1e-12 * std::max(1.0, std::fabs(ref)));
    }
}

TEST(ScoreTest, SwapNegatesZAndKeepsP) {
    std::mt19937_64 rng(37);
    for (int i = 0; i < 1000; ++i) {
        const std::uint64_t n1 = 2 + rng() % 5000, n2 = 2 + rng() % 5000;
        const std::uint64_t x1 = 1 + rng() % (n1 - 1), x2 = 1 + rng() % (n2 - 1);
        const auto a = score_test({x1, n1}, {x2, n2});
        const auto b = score_test({x2, n2}, {x1, n1});
        ASSERT_EQ(a.z, -b.z);
        ASSERT_EQ(a.p_two_sided, b.p_two_sided);
    }
}

TEST(ScoreTest, ScalingBothSamplesScalesZBySqrtK) {
    std::mt19937_64 rng(41);
    for (int i = 0; i < 500; ++i) {
        const std::uint64_t n1 = 2 + rng() % 3000, n2 = 2 + rng() % 3000;
        const std::uint64_t x1 = 1 + rng() % (n1 - 1), x2 = 1 + rng() % (n2 - 1);
        const std::uint64_t k = 2 + rng() % 50;
        const auto base = score_test({x1, n1}, {x2, n2});
        const auto scaled = score_test({k * x1, k * n1}, {k * x2, k * n2});
        const double expected = std::sqrt(static_cast<double>(k)) * base.z;
        ASSERT_NEAR(scaled.z, expected, 1e-12 * std::max(1.0, std::fabs(expected)));
        ASSERT_NEAR(oracle::mp_score_z(k * x1, k * n1, k * x2, k * n2), expected, 1e-12 * std::max(1.0, std::fabs(expected)));
    }
}
