#include <gtest/gtest.h>

#include <random>

#include "scadyg/metrics.hpp"
#include "support/oracles.hpp"

using namespace scadyg;
using namespace scadyg::train;

TEST(Mrr, PositiveAboveEverything) {
    const std::vector<double> pos{5.0, 2.0};
    Matrix neg(2, 100, 1.0);
    EXPECT_EQ(mrr(pos, neg), 1.0);
}

TEST(Mrr, PositiveBelowEverything) {
    const std::vector<double> pos{0.0, -1.0};
    Matrix neg(2, 4, 3.0);
    EXPECT_DOUBLE_EQ(mrr(pos, neg), 0.2);
}

TEST(Mrr, HalfTieRule) {
    const std::vector<double> pos{0.7};
    EXPECT_DOUBLE_EQ(mrr(pos, Matrix{{0.7}}), 2.0 / 3.0);
    // One above, two tied: rank 1 + 1 + 1 = 3.
    EXPECT_DOUBLE_EQ(mrr(pos, Matrix{{0.9, 0.7, 0.7, 0.1}}), 1.0 / 3.0);
}

TEST(Mrr, PermutingNegativesNeverChangesIt) {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> coarse(0, 5);  // plenty of ties
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> pos(8);
        Matrix neg(8, 12);
        for (auto& v : pos) v = coarse(rng);
        for (auto& v : neg.flat()) v = coarse(rng);
        const double base = mrr(pos, neg);
        for (std::size_t r = 0; r < 8; ++r) {
            auto row = neg.row(r);
            std::shuffle(row.begin(), row.end(), rng);
        }
        ASSERT_EQ(mrr(pos, neg), base);
    }
}

TEST(Mrr, RejectsNanAndShapeMismatch) {
    const std::vector<double> pos{std::nan("")};
    EXPECT_THROW(mrr(pos, Matrix{{1.0}}), NumericError);
    const std::vector<double> ok{1.0};
    EXPECT_THROW(mrr(ok, Matrix{{std::nan("")}}), NumericError);
    EXPECT_THROW(mrr(ok, Matrix(2, 1)), std::invalid_argument);
}

TEST(Ndcg, PerfectRankingIsOne) {
    const std::vector<double> truth{0.1, 3.0, 0.0, 2.0, 1.0};
    EXPECT_DOUBLE_EQ(ndcg_at_k(truth, truth, 3), 1.0);
    EXPECT_DOUBLE_EQ(ndcg_at_k(truth, truth, 10), 1.0);
}

TEST(Ndcg, AllZeroTruthIsZero) {
    const std::vector<double> pred{1, 2, 3}, truth{0, 0, 0};
    EXPECT_EQ(ndcg_at_k(pred, truth, 2), 0.0);
}

TEST(Ndcg, ReversedFourClassCase) {
    const std::vector<double> truth{3, 2, 0, 1};
    const std::vector<double> pred{-3, -2, 0, -1};
    // Value from an independent scalar DCG loop.
    constexpr double kWant = 0.6138273133441086;
    EXPECT_NEAR(ndcg_at_k(pred, truth, 4), kWant, 1e-15);
    EXPECT_NEAR(oracle::scalar_ndcg(pred, truth, 4), kWant, 1e-15);
    EXPECT_THROW(ndcg_at_k(pred, truth, 0), std::invalid_argument);
}

TEST(Ndcg, MatchesScalarReferenceOnRandomCases) {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t c = 2 + trial % 15;
        std::vector<double> pred(c), truth(c);
        for (auto& v : pred) v = nd(rng);
        for (auto& v : truth) v = u(rng) < 0.3 ? 0.0 : u(rng);
        const std::size_t k = 1 + trial % 12;
        ASSERT_NEAR(ndcg_at_k(pred, truth, k), oracle::scalar_ndcg(pred, truth, k), 1e-12);
    }
}

TEST(Ndcg, InvariantToMonotoneTransforms) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> pred(10), truth(10), moved(10);
        for (auto& v : pred) v = nd(rng);
        for (auto& v : truth) v = std::abs(nd(rng));
        for (std::size_t i = 0; i < 10; ++i) moved[i] = std::exp(3.0 * pred[i]) + 7.0;
        ASSERT_EQ(ndcg_at_k(pred, truth, 5), ndcg_at_k(moved, truth, 5));
    }
}

TEST(ApAuc, PerfectSeparation) {
    const std::vector<double> pos{0.9, 0.8, 0.95}, neg{0.1, 0.5};
    const auto r = ap_auc(pos, neg);
    EXPECT_EQ(r.ap, 1.0);
    EXPECT_EQ(r.auc, 1.0);
}

TEST(ApAuc, AllTiedGivesHalfAuc) {
    const std::vector<double> pos(4, 0.3), neg(6, 0.3);
    const auto r = ap_auc(pos, neg);
    EXPECT_DOUBLE_EQ(r.auc, 0.5);
    EXPECT_DOUBLE_EQ(r.ap, 0.4);  // one threshold: precision = prevalence
}

TEST(ApAuc, TenPointMixedCase) {
    const std::vector<double> pos{0.9, 0.7, 0.45, 0.3, 0.2};
    const std::vector<double> neg{0.8, 0.5, 0.4, 0.35, 0.1};
    const auto r = ap_auc(pos, neg);
    EXPECT_NEAR(r.auc, oracle::pairwise_auc(pos, neg), 1e-15);
    EXPECT_NEAR(r.ap, oracle::ap_no_ties(pos, neg), 1e-15);
}

TEST(ApAuc, RandomCasesMatchPairwiseOracle) {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> nd;
    std::uniform_int_distribution<int> coarse(0, 4);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> pos(1 + trial % 9), neg(1 + trial % 13);
        const bool ties = trial % 2 == 0;
        for (auto& v : pos) v = ties ? coarse(rng) : nd(rng) + 0.5;
        for (auto& v : neg) v = ties ? coarse(rng) : nd(rng);
        const auto r = ap_auc(pos, neg);
        ASSERT_NEAR(r.auc, oracle::pairwise_auc(pos, neg), 1e-12);
        if (!ties) {
            ASSERT_NEAR(r.ap, oracle::ap_no_ties(pos, neg), 1e-12);
        }
        ASSERT_GE(r.ap, 0.0);
        ASSERT_LE(r.ap, 1.0);
    }
}

TEST(ApAuc, EmptyClassIsAnError) {
    const std::vector<double> some{0.5}, none;
    EXPECT_THROW(ap_auc(some, none), std::invalid_argument);
    EXPECT_THROW(ap_auc(none, some), std::invalid_argument);
}
