// Copyright (C) 2026 The kvbudget Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "attention.hpp"
#include "error.hpp"
#include "oracles.hpp"

using namespace kvbudget;

namespace {

double row_sum(const DenseMatrix& m, std::size_t r) {
    double s = 0.0;
    for (double x : m.row(r)) s += x;
    return s;
}

}  // namespace

TEST(Softmax, EqualLogitsSplitEvenly) {
    auto s = softmax_rows(DenseMatrix{{0.0, 0.0}});
    EXPECT_DOUBLE_EQ(s(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(s(0, 1), 0.5);
}

TEST(Softmax, LogOfOneAndThree) {
    auto s = softmax_rows(DenseMatrix{{std::log(1.0), std::log(3.0)}});
    EXPECT_NEAR(s(0, 0), 0.25, 1e-15);
    EXPECT_NEAR(s(0, 1), 0.75, 1e-15);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
    auto s = softmax_rows(DenseMatrix{{1000.0, 1000.0}});
    EXPECT_DOUBLE_EQ(s(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(s(0, 1), 0.5);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
    std::mt19937_64 gen(11);
    std::normal_distribution<double> nd(0.0, 30.0);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t cols = 1 + gen() % 64;
        DenseMatrix m(3, cols), shifted(3, cols);
        const double c = (trial % 2 ? 1.0 : -1.0) * 1e4 * double(trial % 7);
        for (std::size_t r = 0; r < 3; ++r) {
            for (std::size_t j = 0; j < cols; ++j) {
                m(r, j) = nd(gen);
                shifted(r, j) = m(r, j) + c;
            }
        }
        auto a = softmax_rows(m), b = softmax_rows(shifted);
        for (std::size_t r = 0; r < 3; ++r) {
            EXPECT_NEAR(row_sum(a, r), 1.0, 1e-9);
            for (std::size_t j = 0; j < cols; ++j) EXPECT_NEAR(a(r, j), b(r, j), 1e-9);
        }
    }
}

TEST(Softmax, EmptyRowIsRejected) {
    EXPECT_THROW(softmax_rows(DenseMatrix(2, 0)), Error);
}

TEST(Attention, SingleKeyReturnsValue) {
    auto r = scaled_dot_product_attention(DenseMatrix{{1.0}}, DenseMatrix{{1.0}}, DenseMatrix{{1.0}}, false);
    EXPECT_DOUBLE_EQ(r.weights(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(r.output(0, 0), 1.0);
}

TEST(Attention, TwoKeyHandEvaluation) {
    auto r = scaled_dot_product_attention(DenseMatrix{{1.0, 0.0}}, DenseMatrix{{1.0, 0.0}, {0.0, 1.0}},
                                          DenseMatrix{{1.0}, {0.0}}, false);
    const double e = std::exp(1.0 / std::sqrt(2.0));
    const double sigma = e / (e + 1.0);
    EXPECT_NEAR(sigma, 0.6697615493266569, 1e-15);
    EXPECT_NEAR(r.weights(0, 0), sigma, 1e-12);
    EXPECT_NEAR(r.weights(0, 1), 1.0 - sigma, 1e-12);
    EXPECT_NEAR(r.output(0, 0), sigma, 1e-12);
}

TEST(Attention, CausalWeightsAreExactlyZeroAboveDiagonal) {
    std::mt19937_64 gen(3);
    std::normal_distribution<double> nd;
    for (std::size_t nq : {1u, 4u, 9u}) {
        const std::size_t nk = 9, d = 5;
        DenseMatrix q(nq, d), k(nk, d), v(nk, 2);
        for (std::size_t i = 0; i < nq * d; ++i) q(i / d, i % d) = nd(gen) * 20;
        for (std::size_t i = 0; i < nk * d; ++i) k(i / d, i % d) = nd(gen) * 20;
        for (std::size_t i = 0; i < nk * 2; ++i) v(i / 2, i % 2) = nd(gen);
        auto r = scaled_dot_product_attention(q, k, v, true);
        for (std::size_t i = 0; i < nq; ++i) {
            const std::size_t pos = i + (nk - nq);
            for (std::size_t j = pos + 1; j < nk; ++j) EXPECT_EQ(r.weights(i, j), 0.0);
            EXPECT_NEAR(row_sum(r.weights, i), 1.0, 1e-9);
        }
    }
}

TEST(Attention, IdentityValuesReproduceWeights) {
    std::mt19937_64 gen(5);
    std::normal_distribution<double> nd;
    const std::size_t n = 7, d = 3;
    DenseMatrix q(n, d), k(n, d), v(n, n);
    for (std::size_t i = 0; i < n * d; ++i) {
        q(i / d, i % d) = nd(gen);
        k(i / d, i % d) = nd(gen);
    }
    for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;
    for (bool causal : {false, true}) {
        auto r = scaled_dot_product_attention(q, k, v, causal);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) EXPECT_DOUBLE_EQ(r.output(i, j), r.weights(i, j));
    }
}

TEST(Attention, ShapeErrors) {
    EXPECT_THROW(scaled_dot_product_attention(DenseMatrix{{1.0, 2.0}}, DenseMatrix{{1.0}}, DenseMatrix{{1.0}}, false),
                 Error);
    EXPECT_THROW(scaled_dot_product_attention(DenseMatrix{{1.0}}, DenseMatrix{{1.0}, {2.0}}, DenseMatrix{{1.0}}, false),
                 Error);
    EXPECT_THROW(DenseMatrix(1, 2, std::vector<double>{1.0, std::nan("")}), Error);
}

TEST(TopK, TieGoesToLowerIndex) {
    std::vector<double> w{0.1, 0.4, 0.4, 0.05};
    EXPECT_EQ(top_k_indices(w, 2), (IndexSet{1, 2}));
    std::vector<double> flat{0.3, 0.3, 0.3, 0.3};
    EXPECT_EQ(top_k_indices(flat, 2), (IndexSet{0, 1}));
}

TEST(TopK, KLargerThanLength) {
    std::vector<double> w{0.2, 0.7, 0.1};
    EXPECT_EQ(top_k_indices(w, 5), (IndexSet{0, 1, 2}));
    EXPECT_TRUE(top_k_indices(w, 0).empty());
}

TEST(TopK, MatchesFullSortOracle) {
    std::mt19937_64 gen(17);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + gen() % 128;
        std::vector<double> v(n);
        // Coarse values force frequent ties.
        for (auto& x : v) x = double(gen() % 16) / 16.0;
        const std::size_t k = gen() % (n + 3);
        auto got = top_k_indices(v, k);
        auto want = oracle::top_k(v, k);
        ASSERT_EQ(std::vector<std::size_t>(got.begin(), got.end()), want) << "trial " << trial;
    }
}

TEST(IndexSetTest, RejectsUnsortedOrDuplicate) {
    EXPECT_THROW(IndexSet(std::vector<std::size_t>{2, 1}), Error);
    EXPECT_THROW(IndexSet(std::vector<std::size_t>{1, 1}), Error);
    auto r = IndexSet::range(3, 6);
    EXPECT_TRUE(r.is_contiguous());
    EXPECT_TRUE(r.contains(5));
    EXPECT_FALSE(r.contains(6));
    EXPECT_FALSE((IndexSet{1, 3}).is_contiguous());
}
