// Copyright (C) 2026 The kvbudget Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvbudget/kvbudget.h"

#include <cstring>
#include <exception>
#include <string>
#include <vector>

#include "behavior.hpp"
#include "budget.hpp"
#include "compressor.hpp"
#include "error.hpp"
#include "niah.hpp"
#include "pipeline.hpp"
#include "report.hpp"
#include "sim.hpp"

struct kvb_probes {
    std::vector<kvbudget::NeedleProbe> probes;
};
struct kvb_traces {
    std::vector<kvbudget::AttentionTrace> traces;
};
struct kvb_heatmap {
    kvbudget::ScoreHeatmap heatmap;
};
struct kvb_plan {
    kvbudget::BudgetPlan plan;
};
struct kvb_summary {
    kvbudget::CompressionSummary summary;
};

namespace {

thread_local std::string g_last_error;

kvb_status set_error(kvb_status status, std::string message) {
    g_last_error = std::move(message);
    return status;
}

// Runs `fn`, translating exceptions into status codes.
template <class Fn>
kvb_status guarded(Fn&& fn) {
    try {
        fn();
        return KVB_OK;
    } catch (const kvbudget::Error& e) {
        switch (e.kind()) {
            case kvbudget::ErrorKind::Domain: return set_error(KVB_ERROR_DOMAIN, e.what());
            case kvbudget::ErrorKind::Parse: return set_error(KVB_ERROR_PARSE, e.what());
            case kvbudget::ErrorKind::Io: return set_error(KVB_ERROR_IO, e.what());
        }
        return set_error(KVB_ERROR_INTERNAL, e.what());
    } catch (const std::bad_alloc&) {
        return set_error(KVB_ERROR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return set_error(KVB_ERROR_INTERNAL, e.what());
    } catch (...) {
        return set_error(KVB_ERROR_INTERNAL, "unknown error");
    }
}

#define KVB_REQUIRE(ptr) \
    if (!(ptr)) return set_error(KVB_ERROR_ARGUMENT, #ptr " must not be null")

kvbudget::Metadata parse_metadata(const char* text) {
    kvbudget::Metadata meta;
    if (!text) return meta;
    for (auto line : kvbudget::split(text, '\n')) {
        line = kvbudget::trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            meta.emplace_back(std::string(line), "");
        } else {
            meta.emplace_back(std::string(kvbudget::trim(line.substr(0, eq))),
                              std::string(kvbudget::trim(line.substr(eq + 1))));
        }
    }
    return meta;
}

kvbudget::ToyTransformerConfig to_model(const kvb_model_config& c) {
    kvbudget::ToyTransformerConfig m;
    m.num_layers = c.layers;
    m.num_heads = c.heads;
    m.d_k = c.d_k;
    m.d_model = c.heads * c.d_k;
    m.vocab_size = c.vocab_size;
    m.seed = c.seed;
    m.policy = c.query_policy == KVB_QUERY_WINDOW_MEAN ? kvbudget::QueryRowPolicy::window_mean(c.query_rows)
                                                       : kvbudget::QueryRowPolicy::last_row();
    return m;
}

}  // namespace

extern "C" {

const char* kvb_last_error(void) { return g_last_error.c_str(); }

const char* kvb_version(void) { return "0.1.0"; }

kvb_status kvb_file_digest(const char* path, char* buf, size_t buf_len) {
    KVB_REQUIRE(path);
    KVB_REQUIRE(buf);
    std::string digest;
    const auto status = guarded([&] { digest = kvbudget::file_digest(path); });
    if (status != KVB_OK) return status;
    if (buf_len <= digest.size()) return set_error(KVB_ERROR_ARGUMENT, "digest buffer too small");
    std::memcpy(buf, digest.c_str(), digest.size() + 1);
    return KVB_OK;
}

void kvb_grid_params_default(kvb_grid_params* params) {
    static const std::vector<std::size_t> lengths = kvbudget::ProbeGrid::standard_lengths();
    static const std::vector<double> depths = kvbudget::ProbeGrid::standard_depths();
    if (!params) return;
    *params = {};
    params->lengths = lengths.data();
    params->num_lengths = lengths.size();
    params->depths = depths.data();
    params->num_depths = depths.size();
    params->vocab_size = 1024;
}

kvb_status kvb_probes_build(const kvb_grid_params* params, kvb_probes** out) {
    KVB_REQUIRE(params);
    KVB_REQUIRE(out);
    return guarded([&] {
        kvbudget::ProbeGrid grid;
        if (params->num_lengths) KVB_CHECK(params->lengths, "grid lengths missing");
        if (params->num_depths) KVB_CHECK(params->depths, "grid depths missing");
        grid.lengths.assign(params->lengths, params->lengths + params->num_lengths);
        grid.depths.assign(params->depths, params->depths + params->num_depths);
        if (params->needles && params->num_needles) {
            for (size_t i = 0; i < params->num_needles; ++i) {
                const auto& n = params->needles[i];
                KVB_CHECK(n.needle && n.question && n.answer, "needle template fields must not be null");
                grid.needles.push_back({n.needle, n.question, n.answer});
            }
        } else {
            grid.needles = {kvbudget::builtin_needles().front()};
        }
        grid.vocab_size = params->vocab_size;
        grid.seed = params->seed;
        if (params->haystack_text_path) grid.haystack_text = kvbudget::read_file(params->haystack_text_path);
        *out = new kvb_probes{kvbudget::build_probe_grid(grid)};
    });
}

kvb_status kvb_probes_read(const char* path, kvb_probes** out) {
    KVB_REQUIRE(path);
    KVB_REQUIRE(out);
    return guarded([&] { *out = new kvb_probes{kvbudget::read_probes(path)}; });
}

kvb_status kvb_probes_write(const kvb_probes* probes, const char* path, const char* metadata) {
    KVB_REQUIRE(probes);
    KVB_REQUIRE(path);
    return guarded([&] { kvbudget::write_probes(path, probes->probes, parse_metadata(metadata)); });
}

size_t kvb_probes_count(const kvb_probes* probes) { return probes ? probes->probes.size() : 0; }

size_t kvb_probes_length(const kvb_probes* probes, size_t index) {
    return probes && index < probes->probes.size() ? probes->probes[index].length() : 0;
}

void kvb_probes_free(kvb_probes* probes) { delete probes; }

void kvb_model_config_default(kvb_model_config* config) {
    if (!config) return;
    *config = {};
    config->layers = 4;
    config->heads = 4;
    config->d_k = 32;
    config->vocab_size = 1024;
    config->query_policy = KVB_QUERY_LAST_ROW;
    config->query_rows = 1;
    config->threads = 1;
}

kvb_status kvb_traces_from_model(const kvb_model_config* config, const kvb_probes* probes, kvb_traces** out) {
    KVB_REQUIRE(config);
    KVB_REQUIRE(probes);
    KVB_REQUIRE(out);
    return guarded([&] {
        *out = new kvb_traces{kvbudget::run_forward_all(to_model(*config), probes->probes, config->threads)};
    });
}

kvb_status kvb_traces_oracle(const kvb_probes* probes, const char* mode, size_t layers, size_t heads,
                             kvb_traces** out) {
    KVB_REQUIRE(probes);
    KVB_REQUIRE(mode);
    KVB_REQUIRE(out);
    return guarded([&] {
        const auto m = kvbudget::parse_oracle_mode(mode);
        auto result = std::make_unique<kvb_traces>();
        for (const auto& p : probes->probes) {
            auto t = kvbudget::oracle_trace(p, m, layers, heads);
            std::move(t.begin(), t.end(), std::back_inserter(result->traces));
        }
        *out = result.release();
    });
}

kvb_status kvb_traces_read(const char* path, kvb_traces** out) {
    KVB_REQUIRE(path);
    KVB_REQUIRE(out);
    return guarded([&] { *out = new kvb_traces{kvbudget::read_traces(path)}; });
}

kvb_status kvb_traces_write(const kvb_traces* traces, const char* path, const char* metadata) {
    KVB_REQUIRE(traces);
    KVB_REQUIRE(path);
    return guarded([&] { kvbudget::write_traces(path, traces->traces, parse_metadata(metadata)); });
}

kvb_status kvb_traces_validate(const kvb_traces* traces, const kvb_probes* probes, size_t layers, size_t heads) {
    KVB_REQUIRE(traces);
    KVB_REQUIRE(probes);
    return guarded([&] { kvbudget::validate_traces(traces->traces, probes->probes, layers, heads); });
}

size_t kvb_traces_count(const kvb_traces* traces) { return traces ? traces->traces.size() : 0; }

void kvb_traces_free(kvb_traces* traces) { delete traces; }

kvb_status kvb_heatmap_from_traces(const kvb_traces* traces, const kvb_score_params* params, kvb_heatmap** out) {
    KVB_REQUIRE(traces);
    KVB_REQUIRE(params);
    KVB_REQUIRE(out);
    return guarded([&] {
        const auto agg = params->aggregation == KVB_AGGREGATE_MAX ? kvbudget::Aggregation::Max
                                                                  : kvbudget::Aggregation::Mean;
        *out = new kvb_heatmap{kvbudget::score_traces(traces->traces, {params->top_k}, agg)};
    });
}

kvb_status kvb_heatmap_from_inf(size_t layers, size_t heads, const double* inf, kvb_heatmap** out) {
    KVB_REQUIRE(inf);
    KVB_REQUIRE(out);
    return guarded([&] {
        *out = new kvb_heatmap{kvbudget::ScoreHeatmap::from_inf(layers, heads, std::span(inf, layers * heads))};
    });
}

kvb_status kvb_heatmap_read(const char* path, kvb_heatmap** out) {
    KVB_REQUIRE(path);
    KVB_REQUIRE(out);
    return guarded([&] { *out = new kvb_heatmap{kvbudget::read_heatmap(path)}; });
}

kvb_status kvb_heatmap_write(const kvb_heatmap* heatmap, const char* path, const char* metadata) {
    KVB_REQUIRE(heatmap);
    KVB_REQUIRE(path);
    return guarded([&] { kvbudget::write_heatmap(path, heatmap->heatmap, parse_metadata(metadata)); });
}

kvb_status kvb_heatmap_dims(const kvb_heatmap* heatmap, size_t* layers, size_t* heads) {
    KVB_REQUIRE(heatmap);
    if (layers) *layers = heatmap->heatmap.layers();
    if (heads) *heads = heatmap->heatmap.heads();
    return KVB_OK;
}

kvb_status kvb_heatmap_value(const kvb_heatmap* heatmap, kvb_metric metric, size_t layer, size_t head,
                             double* value) {
    KVB_REQUIRE(heatmap);
    KVB_REQUIRE(value);
    const auto& hm = heatmap->heatmap;
    if (layer >= hm.layers() || head >= hm.heads()) return set_error(KVB_ERROR_DOMAIN, "layer/head out of range");
    if (metric < KVB_METRIC_SF || metric > KVB_METRIC_WIDE) return set_error(KVB_ERROR_ARGUMENT, "unknown metric");
    *value = hm.value(kvbudget::kAllMetrics[static_cast<size_t>(metric)], layer, head);
    return KVB_OK;
}

void kvb_heatmap_free(kvb_heatmap* heatmap) { delete heatmap; }

double kvb_infsc_harmonic(double sf, double lg) { return kvbudget::infsc_harmonic(sf, lg); }

void kvb_allocator_config_default(kvb_allocator_config* config) {
    if (!config) return;
    config->budget = 64;
    config->beta = kvbudget::kDefaultBeta;
    config->floor = kvbudget::kDefaultLayerFloor;
}

kvb_status kvb_plan_allocate(const kvb_allocator_config* config, const kvb_heatmap* heatmap, kvb_plan** out) {
    KVB_REQUIRE(config);
    KVB_REQUIRE(heatmap);
    KVB_REQUIRE(out);
    return guarded([&] {
        *out = new kvb_plan{kvbudget::allocate({config->budget, config->beta, config->floor}, heatmap->heatmap)};
    });
}

kvb_status kvb_plan_read(const char* path, kvb_plan** out) {
    KVB_REQUIRE(path);
    KVB_REQUIRE(out);
    return guarded([&] { *out = new kvb_plan{kvbudget::read_plan(path)}; });
}

kvb_status kvb_plan_write(const kvb_plan* plan, const char* path, const char* metadata) {
    KVB_REQUIRE(plan);
    KVB_REQUIRE(path);
    return guarded([&] { kvbudget::write_plan(path, plan->plan, parse_metadata(metadata)); });
}

kvb_status kvb_plan_dims(const kvb_plan* plan, size_t* layers, size_t* heads) {
    KVB_REQUIRE(plan);
    if (layers) *layers = plan->plan.layers;
    if (heads) *heads = plan->plan.heads;
    return KVB_OK;
}

kvb_status kvb_plan_capacity(const kvb_plan* plan, size_t layer, size_t head, size_t* capacity) {
    KVB_REQUIRE(plan);
    KVB_REQUIRE(capacity);
    if (layer >= plan->plan.layers || head >= plan->plan.heads)
        return set_error(KVB_ERROR_DOMAIN, "layer/head out of range");
    *capacity = plan->plan.capacity(layer, head);
    return KVB_OK;
}

kvb_status kvb_plan_totals(const kvb_plan* plan, size_t* total, double* closed_form) {
    KVB_REQUIRE(plan);
    const auto t = kvbudget::plan_total(plan->plan);
    if (total) *total = t.rounded;
    if (closed_form) *closed_form = t.closed_form;
    return KVB_OK;
}

int kvb_plan_uniform_fallback(const kvb_plan* plan) { return plan && plan->plan.uniform_fallback ? 1 : 0; }

void kvb_plan_free(kvb_plan* plan) { delete plan; }

kvb_status kvb_compress_toy(const kvb_plan* plan, const kvb_model_config* model, const kvb_probes* probes,
                            const kvb_compress_params* params, kvb_summary** out) {
    KVB_REQUIRE(plan);
    KVB_REQUIRE(model);
    KVB_REQUIRE(probes);
    KVB_REQUIRE(params);
    KVB_REQUIRE(out);
    return guarded([&] {
        KVB_CHECK(params->probe_index < probes->probes.size(), "probe index out of range");
        const auto& tokens = probes->probes[params->probe_index].tokens;
        auto result = kvbudget::compress_toy(plan->plan, to_model(*model), tokens, params->window,
                                             {params->pool_kernel});
        *out = new kvb_summary{std::move(result.summary)};
    });
}

kvb_status kvb_summary_write(const kvb_summary* summary, const char* path, const char* metadata) {
    KVB_REQUIRE(summary);
    KVB_REQUIRE(path);
    return guarded([&] { kvbudget::write_summary(path, summary->summary, parse_metadata(metadata)); });
}

kvb_status kvb_summary_totals(const kvb_summary* summary, size_t* original, size_t* retained, double* ratio) {
    KVB_REQUIRE(summary);
    if (original) *original = summary->summary.total_original;
    if (retained) *retained = summary->summary.total_retained;
    if (ratio) *ratio = summary->summary.ratio();
    return KVB_OK;
}

void kvb_summary_free(kvb_summary* summary) { delete summary; }

void kvb_report_params_default(kvb_report_params* params) {
    if (!params) return;
    *params = {};
    params->budget = 64;
    params->floor = kvbudget::kDefaultLayerFloor;
    const kvbudget::BehaviorThresholds t;
    params->wide_below = t.wide_below;
    params->logic_min = t.logic_min;
    params->surface_min = t.surface_min;
}

kvb_status kvb_report(const char* artifact_path, const char* out_path, const kvb_report_params* params) {
    KVB_REQUIRE(artifact_path);
    KVB_REQUIRE(out_path);
    KVB_REQUIRE(params);
    return guarded([&] {
        kvbudget::ReportOptions options;
        options.budget = params->budget;
        options.floor = params->floor;
        if (params->betas && params->num_betas) options.betas.assign(params->betas, params->betas + params->num_betas);
        if (params->use_thresholds) {
            options.thresholds = kvbudget::BehaviorThresholds{params->wide_below, params->logic_min, params->surface_min};
            options.thresholds->validate();
        }
        kvbudget::write_file(out_path, kvbudget::report_for_file(artifact_path, options));
    });
}

}  // extern "C"
