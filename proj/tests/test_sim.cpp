// Copyright (C) 2026 The kvbudget Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "behavior.hpp"
#include "error.hpp"
#include "sim.hpp"

using namespace kvbudget;

namespace {

NeedleProbe small_probe(std::size_t length, double depth = 0.5, std::uint64_t seed = 0) {
    ProbeGrid g;
    g.lengths = {length};
    g.depths = {depth};
    g.needles = {builtin_needles()[0]};
    g.seed = seed;
    g.vocab_size = 64;
    return build_probe_grid(g).at(0);
}

ToyTransformerConfig toy(std::size_t layers, std::size_t heads, std::size_t d_k) {
    ToyTransformerConfig c;
    c.num_layers = layers;
    c.num_heads = heads;
    c.d_k = d_k;
    c.d_model = heads * d_k;
    c.vocab_size = 64;
    c.seed = 5;
    return c;
}

double sum(const std::vector<double>& w) { return std::accumulate(w.begin(), w.end(), 0.0); }

std::string expect_parse_error(const std::string& text) {
    try {
        parse_traces(text);
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Parse);
        return e.what();
    }
    ADD_FAILURE() << "expected parse error";
    return {};
}

}  // namespace

TEST(ToyModel, SingleHeadRowIsNormalized) {
    auto probe = small_probe(40);
    auto traces = run_forward(toy(1, 1, 4), probe);
    ASSERT_EQ(traces.size(), 1u);
    EXPECT_EQ(traces[0].weights.size(), probe.length());
    EXPECT_NEAR(sum(traces[0].weights), 1.0, 1e-9);
}

TEST(ToyModel, LengthEightSequence) {
    TokenSequence hay{{1, 2, 3, 4, 5, 6}, 64}, needle{{7, 8}, 64};
    auto probe = insert_needle(hay, needle, 0.5);
    probe.probe_id = "p";
    auto traces = run_forward(toy(1, 1, 4), probe);
    ASSERT_EQ(traces.size(), 1u);
    EXPECT_EQ(traces[0].weights.size(), 8u);
    EXPECT_NEAR(sum(traces[0].weights), 1.0, 1e-9);
}

TEST(ToyModel, TraceCountIsLayersTimesHeads) {
    auto probe = small_probe(48);
    auto traces = run_forward(toy(2, 2, 8), probe);
    ASSERT_EQ(traces.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(traces[i].layer, i / 2);
        EXPECT_EQ(traces[i].head, i % 2);
        EXPECT_EQ(traces[i].needle_span, probe.needle_span);
        EXPECT_TRUE(std::all_of(traces[i].weights.begin(), traces[i].weights.end(), [](double x) { return x >= 0; }));
        EXPECT_NEAR(sum(traces[i].weights), 1.0, 1e-9);
    }
}

TEST(ToyModel, WindowMeanPolicyRenormalizes) {
    auto cfg = toy(2, 2, 8);
    cfg.policy = QueryRowPolicy::window_mean(4);
    auto traces = run_forward(cfg, small_probe(48));
    for (const auto& t : traces) {
        EXPECT_EQ(t.policy.tag(), "window-mean:4");
        EXPECT_LE(sum(t.weights), 1.0 + 1e-6);
        EXPECT_NEAR(sum(t.weights), 1.0, 1e-9);
    }
}

TEST(ToyModel, ByteIdenticalAcrossRunsAndThreads) {
    std::vector<NeedleProbe> probes{small_probe(40, 0.2), small_probe(64, 0.7), small_probe(50, 0.5)};
    probes[1].probe_id = "b";
    probes[2].probe_id = "c";
    auto cfg = toy(2, 2, 8);
    auto a = serialize_traces(run_forward_all(cfg, probes, 1), {});
    auto b = serialize_traces(run_forward_all(cfg, probes, 1), {});
    auto c = serialize_traces(run_forward_all(cfg, probes, 3), {});
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, c);
}

TEST(ToyModel, SeedChangesWeights) {
    auto probe = small_probe(40);
    auto c1 = toy(1, 1, 8), c2 = c1;
    c2.seed = 6;
    EXPECT_NE(run_forward(c1, probe)[0].weights, run_forward(c2, probe)[0].weights);
}

TEST(ToyModel, BadConfigRejected) {
    auto c = toy(1, 2, 8);
    c.d_model = 15;
    EXPECT_THROW(ToyTransformer{c}, Error);
    c = toy(0, 2, 8);
    EXPECT_THROW(ToyTransformer{c}, Error);
}

TEST(ToyModel, CaptureShapes) {
    auto probe = small_probe(40);
    ToyTransformer model(toy(2, 2, 8));
    auto caps = model.capture(probe.tokens, 4);
    ASSERT_EQ(caps.size(), 4u);
    for (const auto& c : caps) {
        EXPECT_EQ(c.keys.rows(), 40u);
        EXPECT_EQ(c.keys.cols(), 8u);
        EXPECT_EQ(c.values.rows(), 40u);
        EXPECT_EQ(c.window_queries.rows(), 4u);
    }
}

TEST(TraceFile, RoundTrip) {
    auto cfg = toy(2, 2, 8);
    auto traces = run_forward(cfg, small_probe(40));
    auto text = serialize_traces(traces, {{"config.seed", "5"}});
    EXPECT_EQ(parse_traces(text), traces);
    auto oracle = oracle_trace(small_probe(30), OracleMode::Uniform, 1, 2);
    EXPECT_EQ(parse_traces(serialize_traces(oracle, {})), oracle);
}

TEST(TraceFile, TruncatedRowNamesLine) {
    auto traces = run_forward(toy(1, 1, 8), small_probe(40));
    auto text = serialize_traces(traces, {});
    // Drop the last weight of the only record.
    auto cut = text.rfind(',');
    text.erase(cut, text.size() - cut - 1);
    auto msg = expect_parse_error(text);
    const auto header_lines = std::count(text.begin(), text.end(), '\n');
    EXPECT_NE(msg.find("line " + std::to_string(header_lines)), std::string::npos) << msg;
}

TEST(TraceFile, HandBuiltFixtureAccepted) {
    const std::string text =
        "# format = kvbudget-traces/1\n"
        "# source = external exporter\n"
        "q1\t0\t0\tlast-query-row\t5\t1:3\t0.1,0.3,0.3,0.2,0.1\n"
        "q1\t0\t1\tlast-query-row\t5\t1:3\t0.2,0.2,0.2,0.2,0.2\n";
    auto traces = parse_traces(text);
    ASSERT_EQ(traces.size(), 2u);
    EXPECT_EQ(traces[0].needle_span, (IndexSet{1, 2}));
    EXPECT_DOUBLE_EQ(traces[0].weights[1], 0.3);
    auto s = analyze_trace(traces[0], TopKPolicy{});
    EXPECT_NEAR(s.sf_sc, 1.0, 1e-12);
    EXPECT_NEAR(s.lg_sc, 1.0, 1e-12);

    TokenSequence hay{{1, 2, 3}, 64}, needle{{4, 5}, 64};
    auto probe = insert_needle(hay, needle, 1.0 / 3.0);
    probe.probe_id = "q1";
    EXPECT_NO_THROW(validate_traces(traces, std::vector<NeedleProbe>{probe}, 1, 2));
}

TEST(TraceFile, MalformedRecordsRejected) {
    const std::string head = "# format = kvbudget-traces/1\n";
    expect_parse_error(head + "q1\t0\t0\tlast-query-row\t3\t0:1\n");
    expect_parse_error(head + "q1\t0\t0\tlast-query-row\t3\t0:1\t0.5,0.5,0\textra\n");
    expect_parse_error(head + "q1\t0\t0\tlast-query-row\t3\t0:1\t0.5,-0.5,1\n");
    expect_parse_error(head + "q1\t0\t0\tlast-query-row\t3\t0:1\t0.9,0.9,0\n");
    expect_parse_error(head + "q1\t0\t0\tlast-query-row\t3\t2:5\t0.5,0.5,0\n");
    expect_parse_error(head + "q1\tx\t0\tlast-query-row\t3\t0:1\t0.5,0.5,0\n");
    expect_parse_error(head + "q1\t0\t0\tnewest-row\t3\t0:1\t0.5,0.5,0\n");
    expect_parse_error(head + "q1\t0\t0\tlast-query-row\t3\t0:1\t0.5,nan,0\n");
}

TEST(TraceCoverage, MissingHeadIsNamed) {
    auto probe = small_probe(30);
    auto traces = oracle_trace(probe, OracleMode::Uniform, 2, 2);
    traces.erase(traces.begin() + 3);
    try {
        validate_traces(traces, std::vector<NeedleProbe>{probe}, 2, 2);
        FAIL() << "expected coverage error";
    } catch (const Error& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("(" + probe.probe_id + ", 1, 1)"), std::string::npos) << msg;
    }
}

TEST(TraceCoverage, DuplicateAndMismatchReported) {
    auto probe = small_probe(30);
    auto traces = oracle_trace(probe, OracleMode::Uniform, 1, 2);
    traces.push_back(traces[0]);
    EXPECT_THROW(validate_traces(traces, std::vector<NeedleProbe>{probe}, 1, 2), Error);
    traces.pop_back();
    traces[1].needle_span = IndexSet{0};
    EXPECT_THROW(validate_traces(traces, std::vector<NeedleProbe>{probe}, 1, 2), Error);
}

TEST(OracleTrace, AllOnNeedleScoresOne) {
    auto probe = small_probe(64);
    for (const auto& t : oracle_trace(probe, OracleMode::AllOnNeedle, 2, 3)) {
        auto s = analyze_trace(t, TopKPolicy{});
        EXPECT_DOUBLE_EQ(s.sf_sc, 1.0);
        EXPECT_DOUBLE_EQ(s.lg_sc, 1.0);
        EXPECT_DOUBLE_EQ(s.inf_sc, 1.0);
    }
}

TEST(OracleTrace, AllOffNeedleScoresZero) {
    auto probe = small_probe(64);
    for (const auto& t : oracle_trace(probe, OracleMode::AllOffNeedle, 2, 3)) {
        auto s = analyze_trace(t, TopKPolicy{});
        EXPECT_EQ(s.wo, 0.0);
        EXPECT_EQ(s.sf_sc, 0.0);
        EXPECT_EQ(s.lg_sc, 0.0);
        EXPECT_EQ(s.inf_sc, 0.0);
        EXPECT_NEAR(sum(t.weights), 1.0, 1e-12);
    }
}

TEST(OracleTrace, UniformHandArithmetic) {
    auto probe = small_probe(64, 0.5);
    const double n = 64, m = double(probe.needle_span.size());
    auto t = oracle_trace(probe, OracleMode::Uniform).at(0);
    // k positions disjoint from the needle.
    std::vector<std::size_t> top;
    for (std::size_t i = 0; top.size() < 3; ++i)
        if (!probe.needle_span.contains(i)) top.push_back(i);
    auto s = analyze_head(t.weights, probe.needle_span, IndexSet(top));
    EXPECT_NEAR(s.wo, 0.0, 1e-15);
    EXPECT_NEAR(s.wd, 3.0 / n, 1e-15);
    EXPECT_NEAR(s.tnw, m / n, 1e-14);
}

TEST(OracleTrace, ModeTags) {
    EXPECT_EQ(parse_oracle_mode("all-on-needle"), OracleMode::AllOnNeedle);
    EXPECT_EQ(parse_oracle_mode("all-off-needle"), OracleMode::AllOffNeedle);
    EXPECT_EQ(parse_oracle_mode("uniform"), OracleMode::Uniform);
    EXPECT_THROW(parse_oracle_mode("random"), Error);
}
