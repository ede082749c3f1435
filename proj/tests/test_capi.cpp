// Copyright (C) 2026 The kvbudget Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <string>

#include "kvbudget/kvbudget.h"

namespace {

std::string scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "kvbudget_capi_test";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

kvb_probes* small_probes() {
    kvb_grid_params g;
    kvb_grid_params_default(&g);
    const size_t lengths[] = {64, 96};
    const double depths[] = {0.25, 0.75};
    g.lengths = lengths;
    g.num_lengths = 2;
    g.depths = depths;
    g.num_depths = 2;
    g.vocab_size = 128;
    kvb_probes* p = nullptr;
    EXPECT_EQ(kvb_probes_build(&g, &p), KVB_OK) << kvb_last_error();
    return p;
}

kvb_model_config small_model() {
    kvb_model_config m;
    kvb_model_config_default(&m);
    m.layers = 2;
    m.heads = 2;
    m.d_k = 8;
    m.vocab_size = 128;
    return m;
}

}  // namespace

TEST(CApi, VersionAndDefaults) {
    EXPECT_STREQ(kvb_version(), "0.1.0");
    kvb_grid_params g;
    kvb_grid_params_default(&g);
    EXPECT_EQ(g.num_lengths, 6u);
    EXPECT_EQ(g.num_depths, 33u);
    kvb_allocator_config a;
    kvb_allocator_config_default(&a);
    EXPECT_EQ(a.budget, 64u);
    EXPECT_DOUBLE_EQ(a.beta, 1.351);
    EXPECT_DOUBLE_EQ(a.floor, 0.01);
}

TEST(CApi, NullArgumentsReported) {
    kvb_probes* p = nullptr;
    EXPECT_EQ(kvb_probes_build(nullptr, &p), KVB_ERROR_ARGUMENT);
    EXPECT_EQ(p, nullptr);
    EXPECT_NE(std::string(kvb_last_error()).find("null"), std::string::npos);
    EXPECT_EQ(kvb_probes_count(nullptr), 0u);
    kvb_probes_free(nullptr);
}

TEST(CApi, WorkedAllocation) {
    const double inf[] = {0.6, 0.2, 0.1, 0.1};
    kvb_heatmap* hm = nullptr;
    ASSERT_EQ(kvb_heatmap_from_inf(2, 2, inf, &hm), KVB_OK);
    kvb_allocator_config cfg{64, 2.0, 0.01};
    kvb_plan* plan = nullptr;
    ASSERT_EQ(kvb_plan_allocate(&cfg, hm, &plan), KVB_OK);
    size_t cap = 0;
    const size_t want[] = {94, 53, 35, 35};
    for (size_t i = 0; i < 4; ++i) {
        ASSERT_EQ(kvb_plan_capacity(plan, i / 2, i % 2, &cap), KVB_OK);
        EXPECT_EQ(cap, want[i]);
    }
    EXPECT_EQ(kvb_plan_capacity(plan, 2, 0, &cap), KVB_ERROR_DOMAIN);
    size_t total = 0;
    double closed = 0;
    ASSERT_EQ(kvb_plan_totals(plan, &total, &closed), KVB_OK);
    EXPECT_EQ(total, 217u);
    EXPECT_NEAR(closed, 216.32, 1e-12);
    EXPECT_EQ(kvb_plan_uniform_fallback(plan), 0);

    ASSERT_EQ(kvb_plan_write(plan, scratch("plan.txt").c_str(), "tool=test\n"), KVB_OK);
    kvb_plan* back = nullptr;
    ASSERT_EQ(kvb_plan_read(scratch("plan.txt").c_str(), &back), KVB_OK);
    ASSERT_EQ(kvb_plan_capacity(back, 0, 0, &cap), KVB_OK);
    EXPECT_EQ(cap, 94u);
    kvb_plan_free(back);

    cfg.beta = 1.0;
    kvb_plan* rejected = nullptr;
    EXPECT_EQ(kvb_plan_allocate(&cfg, hm, &rejected), KVB_ERROR_DOMAIN);
    EXPECT_EQ(rejected, nullptr);
    EXPECT_NE(std::string(kvb_last_error()).find("invalid ratio"), std::string::npos);
    kvb_plan_free(plan);
    kvb_heatmap_free(hm);
}

TEST(CApi, ErrorKinds) {
    kvb_traces* t = nullptr;
    EXPECT_EQ(kvb_traces_read(scratch("does-not-exist.tsv").c_str(), &t), KVB_ERROR_IO);
    {
        FILE* f = std::fopen(scratch("bad.tsv").c_str(), "w");
        std::fputs("# format = kvbudget-traces/1\nq\t0\t0\tlast-query-row\t3\t0:1\t0.5,0.5\n", f);
        std::fclose(f);
    }
    EXPECT_EQ(kvb_traces_read(scratch("bad.tsv").c_str(), &t), KVB_ERROR_PARSE);
    EXPECT_NE(std::string(kvb_last_error()).find("line 2"), std::string::npos) << kvb_last_error();
    EXPECT_EQ(t, nullptr);
    char buf[8];
    EXPECT_EQ(kvb_file_digest(scratch("bad.tsv").c_str(), buf, sizeof buf), KVB_ERROR_ARGUMENT);
    char full[32];
    ASSERT_EQ(kvb_file_digest(scratch("bad.tsv").c_str(), full, sizeof full), KVB_OK);
    EXPECT_EQ(std::string(full).rfind("fnv1a64:", 0), 0u);
}

TEST(CApi, PipelineThroughHandles) {
    kvb_probes* probes = small_probes();
    ASSERT_NE(probes, nullptr);
    EXPECT_EQ(kvb_probes_count(probes), 4u);
    EXPECT_EQ(kvb_probes_length(probes, 3), 96u);
    EXPECT_EQ(kvb_probes_length(probes, 4), 0u);

    auto model = small_model();
    kvb_traces* traces = nullptr;
    ASSERT_EQ(kvb_traces_from_model(&model, probes, &traces), KVB_OK) << kvb_last_error();
    EXPECT_EQ(kvb_traces_count(traces), 16u);
    EXPECT_EQ(kvb_traces_validate(traces, probes, 2, 2), KVB_OK) << kvb_last_error();
    EXPECT_EQ(kvb_traces_validate(traces, probes, 2, 3), KVB_ERROR_DOMAIN);

    kvb_score_params sp{0, KVB_AGGREGATE_MEAN};
    kvb_heatmap* hm = nullptr;
    ASSERT_EQ(kvb_heatmap_from_traces(traces, &sp, &hm), KVB_OK);
    size_t L = 0, H = 0;
    ASSERT_EQ(kvb_heatmap_dims(hm, &L, &H), KVB_OK);
    EXPECT_EQ(L, 2u);
    EXPECT_EQ(H, 2u);
    double v = -1;
    ASSERT_EQ(kvb_heatmap_value(hm, KVB_METRIC_INF, 1, 1, &v), KVB_OK);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);

    kvb_allocator_config cfg;
    kvb_allocator_config_default(&cfg);
    cfg.budget = 16;
    kvb_plan* plan = nullptr;
    ASSERT_EQ(kvb_plan_allocate(&cfg, hm, &plan), KVB_OK);
    kvb_compress_params cp{4, 0, 3};
    kvb_summary* summary = nullptr;
    ASSERT_EQ(kvb_compress_toy(plan, &model, probes, &cp, &summary), KVB_OK) << kvb_last_error();
    size_t orig = 0, kept = 0;
    double ratio = 0;
    ASSERT_EQ(kvb_summary_totals(summary, &orig, &kept, &ratio), KVB_OK);
    EXPECT_EQ(orig, 4u * 96u);
    EXPECT_LE(kept, orig);
    cp.probe_index = 9;
    kvb_summary* none = nullptr;
    EXPECT_EQ(kvb_compress_toy(plan, &model, probes, &cp, &none), KVB_ERROR_DOMAIN);

    ASSERT_EQ(kvb_heatmap_write(hm, scratch("hm.tsv").c_str(), nullptr), KVB_OK);
    kvb_report_params rp;
    kvb_report_params_default(&rp);
    EXPECT_EQ(kvb_report(scratch("hm.tsv").c_str(), scratch("report.txt").c_str(), &rp), KVB_OK);
    EXPECT_GT(std::filesystem::file_size(scratch("report.txt")), 0u);

    kvb_traces* oracle = nullptr;
    ASSERT_EQ(kvb_traces_oracle(probes, "all-on-needle", 2, 2, &oracle), KVB_OK);
    kvb_heatmap* ones = nullptr;
    ASSERT_EQ(kvb_heatmap_from_traces(oracle, &sp, &ones), KVB_OK);
    ASSERT_EQ(kvb_heatmap_value(ones, KVB_METRIC_INF, 0, 1, &v), KVB_OK);
    EXPECT_DOUBLE_EQ(v, 1.0);
    EXPECT_EQ(kvb_traces_oracle(probes, "sideways", 1, 1, &oracle), KVB_ERROR_DOMAIN);

    kvb_heatmap_free(ones);
    kvb_traces_free(oracle);
    kvb_summary_free(summary);
    kvb_plan_free(plan);
    kvb_heatmap_free(hm);
    kvb_traces_free(traces);
    kvb_probes_free(probes);
}
