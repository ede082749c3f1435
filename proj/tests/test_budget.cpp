// Copyright (C) 2026 The kvbudget Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "budget.hpp"
#include "error.hpp"
#include "oracles.hpp"

using namespace kvbudget;

namespace {

ScoreHeatmap grid(std::size_t L, std::size_t H, const std::vector<double>& inf) {
    return ScoreHeatmap::from_inf(L, H, inf);
}

std::vector<double> random_inf(std::mt19937_64& gen, std::size_t n) {
    std::uniform_real_distribution<double> u;
    std::vector<double> v(n);
    for (auto& x : v) x = u(gen) < 0.15 ? 0.0 : u(gen);
    return v;
}

AllocatorConfig cfg(std::size_t b, double beta) {
    AllocatorConfig c;
    c.budget = b;
    c.beta = beta;
    return c;
}

}  // namespace

TEST(Allocate, WorkedExample) {
    auto plan = allocate(cfg(64, 2.0), grid(2, 2, {0.6, 0.2, 0.1, 0.1}));
    EXPECT_DOUBLE_EQ(plan.b_fixed, 32.0);
    EXPECT_DOUBLE_EQ(plan.b_total, 128.0);
    EXPECT_NEAR(plan.layer_importance[0], 0.8, 1e-15);
    EXPECT_NEAR(plan.layer_importance[1], 0.2, 1e-15);
    EXPECT_NEAR(plan.head_importance[0], 0.6, 1e-15);
    EXPECT_NEAR(plan.head_importance[3], 0.1, 1e-15);
    EXPECT_EQ(plan.capacities, (std::vector<std::size_t>{94, 53, 35, 35}));
    auto total = plan_total(plan);
    EXPECT_EQ(total.rounded, 217u);
    EXPECT_NEAR(total.closed_form, 216.32, 1e-12);
    double unrounded = 0;
    for (double x : plan.unrounded) unrounded += x;
    EXPECT_NEAR(unrounded, 216.32, 1e-12);
    EXPECT_FALSE(plan.uniform_fallback);
}

TEST(Allocate, UniformHeatmapClosedForm) {
    auto plan = allocate(cfg(64, 2.0), grid(2, 2, {0.5, 0.5, 0.5, 0.5}));
    EXPECT_NEAR(plan_total(plan).closed_form, 128.0 + 128.0 * (0.01 + 0.5 * 0.5 * 2), 1e-12);
    EXPECT_NEAR(plan_total(plan).closed_form, 193.28, 1e-12);
    for (auto c : plan.capacities) EXPECT_EQ(c, plan.capacities[0]);
}

TEST(Allocate, MatchesCellOracle) {
    std::mt19937_64 gen(31);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t L = 1 + gen() % 8, H = 1 + gen() % 8;
        auto inf = random_inf(gen, L * H);
        const double beta = std::array{1.2, 1.351, 2.0}[gen() % 3];
        const std::size_t b = gen() % 2 ? 64 : 128;
        auto plan = allocate(cfg(b, beta), grid(L, H, inf));
        std::vector<std::vector<double>> rows(L, std::vector<double>(H));
        for (std::size_t i = 0; i < L * H; ++i) rows[i / H][i % H] = inf[i];
        auto want = oracle::allocate(rows, double(b), beta, 0.01);
        for (std::size_t i = 0; i < L; ++i)
            for (std::size_t j = 0; j < H; ++j) ASSERT_EQ(long(plan.capacity(i, j)), want.caps[i][j]) << trial;
        EXPECT_NEAR(plan_total(plan).closed_form, want.unrounded_total, 1e-9 * want.unrounded_total);
    }
}

TEST(Allocate, SymmetryForEqualScores) {
    for (double v : {0.0, 0.2, 1.0}) {
        auto plan = allocate(cfg(128, 1.351), grid(3, 4, std::vector<double>(12, v)));
        for (auto c : plan.capacities) EXPECT_EQ(c, plan.capacities[0]);
    }
}

TEST(Allocate, LargeBetaGivesBaseBudget) {
    std::mt19937_64 gen(5);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t L = 1 + gen() % 8, H = 1 + gen() % 8;
        auto plan = allocate(cfg(64, 1e6), grid(L, H, random_inf(gen, L * H)));
        for (auto c : plan.capacities) ASSERT_EQ(c, 64u);
    }
}

TEST(Allocate, BetaAtOrBelowOneRejected) {
    auto hm = grid(1, 1, {0.5});
    for (double beta : {1.0, 0.5, -2.0, std::nan("")}) {
        try {
            allocate(cfg(64, beta), hm);
            FAIL() << beta;
        } catch (const Error& e) {
            EXPECT_NE(std::string(e.what()).find("invalid ratio"), std::string::npos);
        }
    }
    AllocatorConfig c = cfg(64, 2.0);
    c.floor = -0.1;
    EXPECT_THROW(allocate(c, hm), Error);
}

TEST(Allocate, ClosedFormBound) {
    std::mt19937_64 gen(77);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t L = 1 + gen() % 8, H = 1 + gen() % 8;
        const double beta = std::array{1.2, 1.351, 2.0}[gen() % 3];
        const std::size_t b = gen() % 2 ? 64 : 128;
        auto plan = allocate(cfg(b, beta), grid(L, H, random_inf(gen, L * H)));
        auto t = plan_total(plan);
        double sq = 0;
        for (double li : plan.layer_importance) sq += li * li;
        const double expect = double(b * L * H) * (1 - 1 / beta) + double(b) / beta * double(L * H) * (0.01 + sq);
        EXPECT_NEAR(t.closed_form, expect, 1e-9 * expect);
        double unrounded = 0;
        for (double x : plan.unrounded) unrounded += x;
        EXPECT_NEAR(unrounded, expect, 1e-9 * expect);
        EXPECT_LE(std::fabs(double(t.rounded) - expect), 0.5 * double(L * H));
    }
}

TEST(Allocate, WithinLayerMonotonicity) {
    std::mt19937_64 gen(13);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t L = 1 + gen() % 8, H = 1 + gen() % 8;
        auto inf = random_inf(gen, L * H);
        auto plan = allocate(cfg(64, 1.351), grid(L, H, inf));
        for (std::size_t i = 0; i < L; ++i)
            for (std::size_t a = 0; a < H; ++a)
                for (std::size_t b = 0; b < H; ++b)
                    if (inf[i * H + a] >= inf[i * H + b]) ASSERT_GE(plan.capacity(i, a), plan.capacity(i, b));
    }
}

TEST(Allocate, CrossLayerDominance) {
    std::mt19937_64 gen(14);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t L = 2 + gen() % 7, H = 1 + gen() % 8;
        auto inf = random_inf(gen, L * H);
        // Plant one shared value in two layers.
        inf[0] = inf[H] = 0.5;
        auto plan = allocate(cfg(128, 1.2), grid(L, H, inf));
        const bool first_wins = plan.layer_importance[0] >= plan.layer_importance[1];
        if (first_wins)
            EXPECT_GE(plan.capacity(0, 0), plan.capacity(1, 0));
        else
            EXPECT_GE(plan.capacity(1, 0), plan.capacity(0, 0));
    }
}

TEST(Allocate, ScaleInvariance) {
    std::mt19937_64 gen(15);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t L = 1 + gen() % 8, H = 1 + gen() % 8;
        auto inf = random_inf(gen, L * H);
        // Powers of two keep every share bit-identical.
        const double c = std::ldexp(1.0, int(gen() % 20) - 10);
        auto scaled = inf;
        for (auto& x : scaled) x *= c;
        auto a = allocate(cfg(64, 1.351), grid(L, H, inf));
        auto b = allocate(cfg(64, 1.351), grid(L, H, scaled));
        ASSERT_EQ(a.capacities, b.capacities) << trial;
    }
    auto a = allocate(cfg(64, 1.351), grid(2, 3, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6}));
    auto b = allocate(cfg(64, 1.351), grid(2, 3, {0.3, 0.6, 0.9, 1.2, 1.5, 1.8}));
    EXPECT_EQ(a.capacities, b.capacities);
}

TEST(Allocate, FloorAndZeroHeads) {
    auto plan = allocate(cfg(64, 2.0), grid(2, 2, {0.999, 0.0, 0.001, 0.0}));
    // Zero-score heads keep exactly the fixed share before rounding.
    EXPECT_DOUBLE_EQ(plan.unrounded[1], plan.b_fixed);
    EXPECT_DOUBLE_EQ(plan.unrounded[3], plan.b_fixed);
    // A head in a nearly empty layer still draws dynamic budget.
    EXPECT_GT(plan.unrounded[2], plan.b_fixed);
}

TEST(Allocate, ZeroHeatmapFallsBackToUniform) {
    auto plan = allocate(cfg(64, 2.0), grid(2, 3, std::vector<double>(6, 0.0)));
    EXPECT_TRUE(plan.uniform_fallback);
    for (auto c : plan.capacities) EXPECT_EQ(c, plan.capacities[0]);
    EXPECT_NEAR(plan_total(plan).closed_form, 32.0 * 6 + 192.0 * (0.01 + 2 * 0.25), 1e-12);
}

TEST(Allocate, ScoresOutsideUnitRangeRejected) {
    EXPECT_THROW(allocate(cfg(64, 2.0), grid(1, 2, {0.5, -0.1})), Error);
}

TEST(PlanFile, RoundTrip) {
    auto plan = allocate(cfg(128, 1.351), grid(2, 3, {0.3, 0.1, 0.7, 0.0, 0.25, 0.5}));
    auto text = serialize_plan(plan, {{"config.beta", "1.351"}});
    auto back = parse_plan(text);
    EXPECT_EQ(back, plan);
    EXPECT_EQ(serialize_plan(back, {{"config.beta", "1.351"}}), text);
}

TEST(PlanFile, InconsistentCapacitiesRejected) {
    auto plan = allocate(cfg(64, 2.0), grid(2, 2, {0.6, 0.2, 0.1, 0.1}));
    auto text = serialize_plan(plan, {});
    auto pos = text.find("capacity.0 = ");
    ASSERT_NE(pos, std::string::npos);
    text.replace(pos, std::string("capacity.0 = 94 53").size(), "capacity.0 = 94 53 7");
    EXPECT_THROW(parse_plan(text), Error);
}
