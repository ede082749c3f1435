// Copyright (C) 2026 The kvbudget Authors
// SPDX-License-Identifier: Apache-2.0

// Batch front end for the kvbudget pipeline:
//   probe -> trace -> score -> allocate -> compress, plus report.
// Every stage reads and writes files; all options may also come from a flat
// `key = value` config file (--config), with command-line flags taking
// precedence. Exit codes: 0 success, 1 validation/domain error, 2 I/O error.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "kvbudget/kvbudget.h"

namespace {

constexpr int kExitDomain = 1;
constexpr int kExitIo = 2;

struct Options {
    std::uint64_t seed = 0;
    std::string out;
    std::string grid = "standard";
    std::size_t vocab = 1024;
    std::size_t needles = 1;
    std::string haystack_text;

    std::size_t layers = 4;
    std::size_t heads = 4;
    std::size_t d_k = 32;
    std::string query_policy = "last-query-row";
    std::size_t threads = 1;

    std::string topk_policy = "needle-length";
    std::string aggregation = "mean";

    std::size_t budget = 64;
    double beta = 1.351;
    double floor = 0.01;

    std::size_t window = 8;
    std::size_t pool_kernel = 0;
    std::size_t probe_index = 0;

    std::string probes, traces, heatmap, plan, ingest, input;
    std::vector<double> betas;
    std::vector<double> thresholds;
};

class CommandError : public std::runtime_error {
public:
    CommandError(int code, const std::string& what) : std::runtime_error(what), code(code) {}
    int code;
};

void check(kvb_status status) {
    if (status == KVB_OK) return;
    throw CommandError(status == KVB_ERROR_IO ? kExitIo : kExitDomain, kvb_last_error());
}

[[noreturn]] void usage_error(const std::string& what) { throw CommandError(kExitDomain, what); }

template <class T, void (*Free)(T*)>
struct Handle {
    T* ptr = nullptr;
    Handle() = default;
    Handle(const Handle&) = delete;
    Handle& operator=(const Handle&) = delete;
    ~Handle() { Free(ptr); }
    T** out() { return &ptr; }
    T* get() const { return ptr; }
};

using Probes = Handle<kvb_probes, kvb_probes_free>;
using Traces = Handle<kvb_traces, kvb_traces_free>;
using Heatmap = Handle<kvb_heatmap, kvb_heatmap_free>;
using Plan = Handle<kvb_plan, kvb_plan_free>;
using Summary = Handle<kvb_summary, kvb_summary_free>;

std::string digest(const std::string& path) {
    char buf[32];
    check(kvb_file_digest(path.c_str(), buf, sizeof(buf)));
    return buf;
}

// Header lines embedded in each output: tool, command, settings, input digests.
class Provenance {
public:
    explicit Provenance(const std::string& command) {
        add("tool", std::string("kvbudget ") + kvb_version());
        add("command", command);
    }
    Provenance& add(const std::string& key, const std::string& value) {
        m_text += key + "=" + value + "\n";
        return *this;
    }
    template <class T>
    Provenance& config(const std::string& key, const T& value) {
        std::ostringstream ss;
        ss.precision(17);
        ss << value;
        return add("config." + key, ss.str());
    }
    Provenance& input(const std::string& name, const std::string& path) { return add("input." + name, digest(path)); }
    const char* c_str() const { return m_text.c_str(); }

private:
    std::string m_text;
};

void require(const std::string& value, const char* flag) {
    if (value.empty()) usage_error(std::string("missing required option ") + flag);
}

std::vector<std::string> split_list(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep))
        if (!item.empty()) out.push_back(item);
    return out;
}

// "standard" or "<len>,<len>,...:<depth>,<depth>,..."
void parse_grid(const std::string& text, std::vector<std::size_t>& lengths, std::vector<double>& depths) {
    if (text == "standard") return;
    const auto colon = text.find(':');
    if (colon == std::string::npos) usage_error("bad --grid '" + text + "' (expected standard or LENGTHS:DEPTHS)");
    try {
        for (const auto& l : split_list(text.substr(0, colon), ',')) lengths.push_back(std::stoull(l));
        for (const auto& d : split_list(text.substr(colon + 1), ',')) depths.push_back(std::stod(d));
    } catch (const std::exception&) {
        usage_error("bad --grid '" + text + "'");
    }
    if (lengths.empty() || depths.empty()) usage_error("empty grid");
}

kvb_model_config model_config(const Options& o) {
    kvb_model_config c;
    kvb_model_config_default(&c);
    c.layers = o.layers;
    c.heads = o.heads;
    c.d_k = o.d_k;
    c.vocab_size = o.vocab;
    c.seed = o.seed;
    c.threads = o.threads;
    if (o.query_policy == "last-query-row") {
        c.query_policy = KVB_QUERY_LAST_ROW;
    } else if (o.query_policy.rfind("window-mean:", 0) == 0) {
        c.query_policy = KVB_QUERY_WINDOW_MEAN;
        try {
            c.query_rows = std::stoull(o.query_policy.substr(12));
        } catch (const std::exception&) {
            usage_error("bad --query-policy '" + o.query_policy + "'");
        }
    } else {
        usage_error("bad --query-policy '" + o.query_policy + "' (expected last-query-row or window-mean:N)");
    }
    return c;
}

Provenance& model_provenance(Provenance& p, const Options& o) {
    return p.config("seed", o.seed)
        .config("layers", o.layers)
        .config("heads", o.heads)
        .config("d_k", o.d_k)
        .config("vocab", o.vocab)
        .config("query_policy", o.query_policy);
}

int cmd_probe(const Options& o) {
    require(o.out, "--out");
    kvb_grid_params params;
    kvb_grid_params_default(&params);
    std::vector<std::size_t> lengths;
    std::vector<double> depths;
    parse_grid(o.grid, lengths, depths);
    if (!lengths.empty()) {
        params.lengths = lengths.data();
        params.num_lengths = lengths.size();
        params.depths = depths.data();
        params.num_depths = depths.size();
    }
    static const kvb_needle_template builtin[] = {
        {"The good ways to spend time in campus include relax and do nothing.",
         "What are good ways to spend time in campus?", "Relax and do nothing."},
        {"The beneficial habits during Ph.D. career contain exercise and healthy diet.",
         "What habits are beneficial for health during Ph.D. career?", "Exercise and healthy diet."},
        {"Tom was born in 2005. Tom started high school fifteen years after he was born.",
         "Which year did Tom start high school?", "Tom started high school in 2020."},
    };
    if (o.needles < 1 || o.needles > std::size(builtin)) usage_error("--needles must be between 1 and 3");
    params.needles = builtin;
    params.num_needles = o.needles;
    params.vocab_size = o.vocab;
    params.seed = o.seed;
    Provenance prov("probe");
    prov.config("seed", o.seed).config("grid", o.grid).config("vocab", o.vocab).config("needles", o.needles);
    if (!o.haystack_text.empty()) {
        params.haystack_text_path = o.haystack_text.c_str();
        prov.input("haystack_text", o.haystack_text);
    }

    Probes probes;
    check(kvb_probes_build(&params, probes.out()));
    check(kvb_probes_write(probes.get(), o.out.c_str(), prov.c_str()));
    const auto n = kvb_probes_count(probes.get());
    std::cout << n << (n == 1 ? " probe" : " probes") << " written\n";
    return 0;
}

int cmd_trace(const Options& o) {
    require(o.probes, "--probes");
    Probes probes;
    check(kvb_probes_read(o.probes.c_str(), probes.out()));
    Traces traces;
    Provenance prov("trace");
    prov.input("probes", o.probes);

    if (!o.ingest.empty()) {
        check(kvb_traces_read(o.ingest.c_str(), traces.out()));
        check(kvb_traces_validate(traces.get(), probes.get(), o.layers, o.heads));
        std::cout << "validated " << kvb_traces_count(traces.get()) << " trace records\n";
        if (!o.out.empty()) {
            prov.config("layers", o.layers).config("heads", o.heads).input("ingested", o.ingest);
            check(kvb_traces_write(traces.get(), o.out.c_str(), prov.c_str()));
        }
        return 0;
    }

    require(o.out, "--out");
    const auto model = model_config(o);
    check(kvb_traces_from_model(&model, probes.get(), traces.out()));
    model_provenance(prov, o);
    check(kvb_traces_write(traces.get(), o.out.c_str(), prov.c_str()));
    const auto n = kvb_traces_count(traces.get());
    std::cout << n << (n == 1 ? " trace record" : " trace records") << " written\n";
    return 0;
}

int cmd_score(const Options& o) {
    require(o.traces, "--traces");
    require(o.out, "--out");
    kvb_score_params params{};
    if (o.topk_policy == "needle-length" || o.topk_policy == "needle") {
        params.top_k = 0;
    } else {
        try {
            params.top_k = std::stoull(o.topk_policy);
        } catch (const std::exception&) {
            usage_error("bad --topk-policy '" + o.topk_policy + "'");
        }
        if (params.top_k == 0) usage_error("--topk-policy must be needle-length or a positive integer");
    }
    if (o.aggregation == "mean") {
        params.aggregation = KVB_AGGREGATE_MEAN;
    } else if (o.aggregation == "max") {
        params.aggregation = KVB_AGGREGATE_MAX;
    } else {
        usage_error("bad --aggregation '" + o.aggregation + "' (expected mean or max)");
    }

    Traces traces;
    check(kvb_traces_read(o.traces.c_str(), traces.out()));
    Heatmap heatmap;
    check(kvb_heatmap_from_traces(traces.get(), &params, heatmap.out()));
    Provenance prov("score");
    prov.config("topk_policy", o.topk_policy).config("aggregation", o.aggregation).input("traces", o.traces);
    check(kvb_heatmap_write(heatmap.get(), o.out.c_str(), prov.c_str()));
    std::size_t layers = 0, heads = 0;
    check(kvb_heatmap_dims(heatmap.get(), &layers, &heads));
    std::cout << "heatmap " << layers << "x" << heads << " written from " << kvb_traces_count(traces.get())
              << " traces\n";
    return 0;
}

int cmd_allocate(const Options& o) {
    require(o.heatmap, "--heatmap");
    require(o.out, "--out");
    Heatmap heatmap;
    check(kvb_heatmap_read(o.heatmap.c_str(), heatmap.out()));
    const kvb_allocator_config config{o.budget, o.beta, o.floor};
    Plan plan;
    check(kvb_plan_allocate(&config, heatmap.get(), plan.out()));
    if (kvb_plan_uniform_fallback(plan.get()))
        std::cerr << "warning: every INFsc is zero; dynamic budget spread uniformly\n";
    Provenance prov("allocate");
    prov.config("budget", o.budget).config("beta", o.beta).config("floor", o.floor).input("heatmap", o.heatmap);
    check(kvb_plan_write(plan.get(), o.out.c_str(), prov.c_str()));
    std::size_t total = 0;
    double closed = 0.0;
    check(kvb_plan_totals(plan.get(), &total, &closed));
    std::cout << "plan written: total capacity " << total << " tokens (unrounded " << closed << ")\n";
    return 0;
}

int cmd_compress(const Options& o) {
    require(o.plan, "--plan");
    require(o.probes, "--probes");
    require(o.out, "--out");
    Plan plan;
    check(kvb_plan_read(o.plan.c_str(), plan.out()));
    Probes probes;
    check(kvb_probes_read(o.probes.c_str(), probes.out()));
    const auto model = model_config(o);
    const kvb_compress_params params{o.window, o.pool_kernel, o.probe_index};
    Summary summary;
    check(kvb_compress_toy(plan.get(), &model, probes.get(), &params, summary.out()));
    Provenance prov("compress");
    model_provenance(prov, o)
        .config("window", o.window)
        .config("pool_kernel", o.pool_kernel)
        .config("probe_index", o.probe_index)
        .input("plan", o.plan)
        .input("probes", o.probes);
    check(kvb_summary_write(summary.get(), o.out.c_str(), prov.c_str()));
    std::size_t original = 0, retained = 0;
    double ratio = 0.0;
    check(kvb_summary_totals(summary.get(), &original, &retained, &ratio));
    std::cout << "retained " << retained << " of " << original << " cached tokens (ratio " << ratio << ")\n";
    return 0;
}

int cmd_report(const Options& o) {
    require(o.input, "--input");
    kvb_report_params params;
    kvb_report_params_default(&params);
    params.budget = o.budget;
    params.floor = o.floor;
    if (!o.betas.empty()) {
        params.betas = o.betas.data();
        params.num_betas = o.betas.size();
    }
    if (!o.thresholds.empty()) {
        if (o.thresholds.size() != 3) usage_error("--thresholds takes wide_below,logic_min,surface_min");
        params.use_thresholds = 1;
        params.wide_below = o.thresholds[0];
        params.logic_min = o.thresholds[1];
        params.surface_min = o.thresholds[2];
    }
    const std::string out = o.out.empty() || o.out == "-" ? "/dev/stdout" : o.out;
    check(kvb_report(o.input.c_str(), out.c_str(), &params));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"KV-cache budget toolkit: probe, trace, score, allocate, compress, report"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "Flat key = value file; flags override its values");

    Options o;
    app.add_option("--seed", o.seed, "Seed for every random stream")->capture_default_str();
    app.add_option("--out", o.out, "Output path ('-' = stdout for report)");

    app.add_option("--grid", o.grid, "standard, or LENGTHS:DEPTHS such as 256,512:0.1,0.5,0.9")->capture_default_str();
    app.add_option("--vocab", o.vocab, "Vocabulary size")->capture_default_str();
    app.add_option("--needles", o.needles, "Number of builtin needle templates (1-3)")->capture_default_str();
    app.add_option("--haystack-text", o.haystack_text, "Text file used as haystack instead of synthetic filler");

    app.add_option("--layers", o.layers, "Toy model layers")->capture_default_str();
    app.add_option("--heads", o.heads, "Toy model heads per layer")->capture_default_str();
    app.add_option("--dk", o.d_k, "Toy model head dimension")->capture_default_str();
    app.add_option("--query-policy", o.query_policy, "last-query-row or window-mean:N")->capture_default_str();
    app.add_option("--threads", o.threads, "Worker threads for toy forward passes")->capture_default_str();

    app.add_option("--topk-policy", o.topk_policy, "needle-length or a fixed k")->capture_default_str();
    app.add_option("--aggregation", o.aggregation, "mean or max over probes")->capture_default_str();

    app.add_option("--budget", o.budget, "Base KV tokens per head")->capture_default_str();
    app.add_option("--beta", o.beta, "Allocation ratio (> 1)")->capture_default_str();
    app.add_option("--floor", o.floor, "Per-layer floor inside the dynamic share")->capture_default_str();

    app.add_option("--window", o.window, "Query window kept during compression")->capture_default_str();
    app.add_option("--pool-kernel", o.pool_kernel, "Odd max-pool width over relevance (0 = off)")
        ->capture_default_str();
    app.add_option("--probe-index", o.probe_index, "Probe whose tokens fill the caches")->capture_default_str();

    app.add_option("--probes", o.probes, "Probe file");
    app.add_option("--traces", o.traces, "Trace file");
    app.add_option("--heatmap", o.heatmap, "Heatmap file");
    app.add_option("--plan", o.plan, "Plan file");
    app.add_option("--ingest", o.ingest, "Externally produced trace file to validate");
    app.add_option("--input", o.input, "Artifact to report on");
    app.add_option("--betas", o.betas, "Beta sweep for heatmap reports")->delimiter(',');
    app.add_option("--thresholds", o.thresholds, "wide_below,logic_min,surface_min for class shares")
        ->delimiter(',');

    auto* probe = app.add_subcommand("probe", "Generate needle-in-a-haystack probes");
    auto* trace = app.add_subcommand("trace", "Run the toy model over probes, or validate ingested traces");
    auto* score = app.add_subcommand("score", "Score attention behavior per head into a heatmap");
    auto* allocate = app.add_subcommand("allocate", "Allocate per-head KV capacities from a heatmap");
    auto* compress = app.add_subcommand("compress", "Compress toy KV caches under a plan");
    auto* report = app.add_subcommand("report", "Emit plot-ready tables for any artifact");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitDomain;
    }

    try {
        if (*probe) return cmd_probe(o);
        if (*trace) return cmd_trace(o);
        if (*score) return cmd_score(o);
        if (*allocate) return cmd_allocate(o);
        if (*compress) return cmd_compress(o);
        if (*report) return cmd_report(o);
    } catch (const CommandError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code;
    }
    return kExitDomain;
}
