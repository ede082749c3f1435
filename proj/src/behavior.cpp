// Copyright (C) 2026 The kvbudget Authors
// SPDX-License-Identifier: Apache-2.0

#include "behavior.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "error.hpp"

namespace kvbudget {

double infsc_harmonic(double sf, double lg) {
    const double denom = sf + lg;
    return denom > 0.0 ? 2.0 * sf * lg / denom : 0.0;
}

BehaviorScores analyze_head(std::span<const double> w, const IndexSet& needle, const IndexSet& top_k) {
    KVB_CHECK(needle.bounded_by(w.size()) && top_k.bounded_by(w.size()), "bad index set");
    BehaviorScores s;
    double total = 0.0;
    for (double x : w) {
        KVB_CHECK(x >= 0.0, "attention weights must be nonnegative");
        total += x;
    }
    for (auto i : needle) {
        s.tnw += w[i];
        if (top_k.contains(i)) s.wo += w[i];
    }
    for (auto i : top_k)
        if (!needle.contains(i)) s.wd += w[i];
    s.ws = std::max(0.0, s.tnw - s.wo);
    s.wide = std::max(0.0, total - s.wo - s.wd - s.ws);

    s.sf_sc = s.wo + s.wd > 0.0 ? s.wo / (s.wo + s.wd) : 0.0;
    s.lg_sc = s.wo + s.ws > 0.0 ? s.wo / (s.wo + s.ws) : 0.0;
    s.inf_sc = infsc_harmonic(s.sf_sc, s.lg_sc);
    return s;
}

std::string TopKPolicy::tag() const { return fixed_k ? std::to_string(fixed_k) : "needle-length"; }

TopKPolicy TopKPolicy::parse(std::string_view tag) {
    tag = trim(tag);
    if (tag == "needle-length" || tag == "needle") return {};
    std::size_t k = 0;
    try {
        k = parse_count(tag, 0);
    } catch (const Error&) {
        k = 0;
    }
    KVB_CHECK(k > 0, "bad top-k policy '" + std::string(tag) + "' (expected needle-length or a positive integer)");
    return {k};
}

BehaviorScores analyze_trace(const AttentionTrace& trace, const TopKPolicy& policy) {
    return analyze_head(trace.weights, trace.needle_span, top_k_indices(trace.weights, policy.k_for(trace)));
}

std::string aggregation_tag(Aggregation a) { return a == Aggregation::Mean ? "mean" : "max"; }

Aggregation parse_aggregation(std::string_view tag) {
    tag = trim(tag);
    if (tag == "mean") return Aggregation::Mean;
    if (tag == "max") return Aggregation::Max;
    fail("unknown aggregation '" + std::string(tag) + "' (expected mean or max)");
}

std::string metric_name(Metric m) {
    switch (m) {
        case Metric::SfSc: return "sf_sc";
        case Metric::LgSc: return "lg_sc";
        case Metric::InfSc: return "inf_sc";
        case Metric::Wo: return "wo";
        case Metric::Wd: return "wd";
        case Metric::Ws: return "ws";
        case Metric::Wide: return "wide";
    }
    return {};
}

double metric_value(const BehaviorScores& s, Metric m) {
    switch (m) {
        case Metric::SfSc: return s.sf_sc;
        case Metric::LgSc: return s.lg_sc;
        case Metric::InfSc: return s.inf_sc;
        case Metric::Wo: return s.wo;
        case Metric::Wd: return s.wd;
        case Metric::Ws: return s.ws;
        case Metric::Wide: return s.wide;
    }
    return 0.0;
}

namespace {

double& metric_ref(BehaviorScores& s, Metric m) {
    switch (m) {
        case Metric::SfSc: return s.sf_sc;
        case Metric::LgSc: return s.lg_sc;
        case Metric::InfSc: return s.inf_sc;
        case Metric::Wo: return s.wo;
        case Metric::Wd: return s.wd;
        case Metric::Ws: return s.ws;
        case Metric::Wide: return s.wide;
    }
    return s.wide;
}

}  // namespace

ScoreHeatmap::ScoreHeatmap(std::size_t layers, std::size_t heads, Aggregation aggregation)
    : m_layers(layers), m_heads(heads), m_aggregation(aggregation), m_cells(layers * heads), m_counts(layers * heads) {}

std::vector<double> ScoreHeatmap::inf_grid() const {
    std::vector<double> out;
    out.reserve(m_cells.size());
    for (const auto& c : m_cells) out.push_back(c.inf_sc);
    return out;
}

ScoreHeatmap ScoreHeatmap::from_inf(std::size_t layers, std::size_t heads, std::span<const double> inf) {
    KVB_CHECK(inf.size() == layers * heads, "heatmap/config mismatch");
    ScoreHeatmap h(layers, heads, Aggregation::Mean);
    for (std::size_t i = 0; i < inf.size(); ++i) {
        h.m_cells[i].inf_sc = inf[i];
        h.m_counts[i] = 1;
    }
    return h;
}

ScoreHeatmap aggregate_grid(const ProbeScores& per_probe, std::size_t layers, std::size_t heads,
                            Aggregation aggregation) {
    KVB_CHECK(layers > 0 && heads > 0, "heatmap needs at least one layer and head");
    ScoreHeatmap out(layers, heads, aggregation);
    for (const auto& [key, scores] : per_probe) {
        const auto& [probe, layer, head] = key;
        KVB_CHECK(layer < layers && head < heads, "score for (" + std::to_string(layer) + ", " +
                                                      std::to_string(head) + ") outside the heatmap");
        auto& cell = out.at(layer, head);
        const auto n = out.probe_count(layer, head);
        for (auto m : kAllMetrics) {
            double& acc = metric_ref(cell, m);
            const double x = metric_value(scores, m);
            acc = aggregation == Aggregation::Mean ? acc + x : (n == 0 ? x : std::max(acc, x));
        }
        out.set_probe_count(layer, head, n + 1);
    }
    std::string missing;
    for (std::size_t l = 0; l < layers; ++l) {
        for (std::size_t h = 0; h < heads; ++h) {
            const auto n = out.probe_count(l, h);
            if (n == 0) {
                missing += " (" + std::to_string(l) + ", " + std::to_string(h) + ")";
                continue;
            }
            if (aggregation == Aggregation::Mean)
                for (auto m : kAllMetrics) metric_ref(out.at(l, h), m) /= static_cast<double>(n);
        }
    }
    KVB_CHECK(missing.empty(), "incomplete trace coverage: no probes for" + missing);
    return out;
}

ScoreHeatmap score_traces(std::span<const AttentionTrace> traces, const TopKPolicy& policy, Aggregation aggregation) {
    KVB_CHECK(!traces.empty(), "no traces to score");
    ProbeScores per_probe;
    std::size_t layers = 0, heads = 0;
    for (const auto& t : traces) {
        auto [it, inserted] = per_probe.emplace(std::make_tuple(t.probe_id, t.layer, t.head), analyze_trace(t, policy));
        KVB_CHECK(inserted, "duplicate trace for (" + t.probe_id + ", " + std::to_string(t.layer) + ", " +
                                std::to_string(t.head) + ")");
        layers = std::max(layers, t.layer + 1);
        heads = std::max(heads, t.head + 1);
    }
    return aggregate_grid(per_probe, layers, heads, aggregation);
}

std::string behavior_class_name(BehaviorClass c) {
    switch (c) {
        case BehaviorClass::Wide: return "Wide";
        case BehaviorClass::LogicConstruction: return "LogicConstruction";
        case BehaviorClass::SurfaceMemorization: return "SurfaceMemorization";
    }
    return {};
}

void BehaviorThresholds::validate() const {
    auto unit = [](double x) { return std::isfinite(x) && x >= 0.0 && x <= 1.0; };
    KVB_CHECK(unit(wide_below) && unit(logic_min) && unit(surface_min), "bad thresholds: values must lie in [0, 1]");
    KVB_CHECK(wide_below <= logic_min && wide_below <= surface_min,
              "bad thresholds: wide cutoff overlaps the logic/surface minimums");
}

std::string BehaviorThresholds::describe() const {
    return "wide_below=" + format_real(wide_below) + " logic_min=" + format_real(logic_min) +
           " surface_min=" + format_real(surface_min);
}

BehaviorClass classify_behavior(const BehaviorScores& s, const BehaviorThresholds& t) {
    t.validate();
    if (s.inf_sc < t.wide_below) return BehaviorClass::Wide;
    if (s.lg_sc >= t.logic_min && s.lg_sc >= s.sf_sc) return BehaviorClass::LogicConstruction;
    if (s.sf_sc >= t.surface_min) return BehaviorClass::SurfaceMemorization;
    return BehaviorClass::Wide;
}

double ClassShare::percent(BehaviorClass c) const {
    return total ? 100.0 * static_cast<double>(counts[static_cast<std::size_t>(c)]) / static_cast<double>(total) : 0.0;
}

ClassShare class_shares(const ScoreHeatmap& heatmap, const BehaviorThresholds& thresholds) {
    thresholds.validate();
    ClassShare share;
    for (std::size_t l = 0; l < heatmap.layers(); ++l)
        for (std::size_t h = 0; h < heatmap.heads(); ++h) {
            ++share.counts[static_cast<std::size_t>(classify_behavior(heatmap.at(l, h), thresholds))];
            ++share.total;
        }
    return share;
}

namespace {
constexpr std::string_view kHeatmapColumns = "layer\thead\tsf_sc\tlg_sc\tinf_sc\two\twd\tws\twide\tprobe_count";
}

std::string serialize_heatmap(const ScoreHeatmap& heatmap, const Metadata& meta) {
    std::string out = "# format = kvbudget-heatmap/1\n";
    append_metadata(out, meta);
    out += "# layers = " + std::to_string(heatmap.layers()) + "\n";
    out += "# heads = " + std::to_string(heatmap.heads()) + "\n";
    out += "# aggregation = " + aggregation_tag(heatmap.aggregation()) + "\n";
    out += kHeatmapColumns;
    out += '\n';
    for (std::size_t l = 0; l < heatmap.layers(); ++l) {
        for (std::size_t h = 0; h < heatmap.heads(); ++h) {
            const auto& s = heatmap.at(l, h);
            const double row[] = {s.sf_sc, s.lg_sc, s.inf_sc, s.wo, s.wd, s.ws, s.wide};
            out += std::to_string(l) + '\t' + std::to_string(h) + '\t' + format_reals(row, '\t') + '\t' +
                   std::to_string(heatmap.probe_count(l, h)) + '\n';
        }
    }
    return out;
}

ScoreHeatmap parse_heatmap(std::string contents) {
    auto doc = parse_document(std::move(contents));
    auto require = [&](std::string_view key) -> const std::string& {
        const auto* v = doc.find(key);
        if (!v) parse_fail(1, "missing header key '" + std::string(key) + "'");
        return *v;
    };
    const auto layers = parse_count(require("layers"), 1);
    const auto heads = parse_count(require("heads"), 1);
    Aggregation agg;
    try {
        agg = parse_aggregation(require("aggregation"));
    } catch (const Error& e) {
        parse_fail(1, e.what());
    }
    if (layers == 0 || heads == 0) parse_fail(1, "empty heatmap");
    if (doc.lines.empty() || doc.lines.front().second != kHeatmapColumns)
        parse_fail(doc.lines.empty() ? 1 : doc.lines.front().first, "expected heatmap column header");

    ScoreHeatmap hm(layers, heads, agg);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (std::size_t i = 1; i < doc.lines.size(); ++i) {
        const auto& [line_no, line] = doc.lines[i];
        auto f = split(line, '\t');
        if (f.size() != 10) parse_fail(line_no, "expected 10 fields, found " + std::to_string(f.size()));
        const auto l = parse_count(f[0], line_no), h = parse_count(f[1], line_no);
        if (l >= layers || h >= heads) parse_fail(line_no, "layer/head outside declared dimensions");
        if (!seen.emplace(l, h).second) parse_fail(line_no, "duplicate (layer, head) row");
        auto& s = hm.at(l, h);
        s.sf_sc = parse_real(f[2], line_no);
        s.lg_sc = parse_real(f[3], line_no);
        s.inf_sc = parse_real(f[4], line_no);
        s.wo = parse_real(f[5], line_no);
        s.wd = parse_real(f[6], line_no);
        s.ws = parse_real(f[7], line_no);
        s.wide = parse_real(f[8], line_no);
        hm.set_probe_count(l, h, parse_count(f[9], line_no));
        for (auto m : kAllMetrics) {
            const double x = metric_value(s, m);
            if (x < 0.0 || x > 1.0 + 1e-6) parse_fail(line_no, metric_name(m) + " outside [0, 1]");
        }
    }
    if (seen.size() != layers * heads)
        parse_fail(doc.lines.back().first, "heatmap has " + std::to_string(seen.size()) + " rows, expected " +
                                               std::to_string(layers * heads));
    return hm;
}

void write_heatmap(const std::filesystem::path& path, const ScoreHeatmap& heatmap, const Metadata& meta) {
    write_file(path, serialize_heatmap(heatmap, meta));
}

ScoreHeatmap read_heatmap(const std::filesystem::path& path) { return parse_heatmap(read_file(path)); }

}  // namespace kvbudget
