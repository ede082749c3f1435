// Copyright (C) 2026 The kvbudget Authors
// SPDX-License-Identifier: Apache-2.0

#include "report.hpp"

#include <algorithm>
#include <map>

#include "error.hpp"

namespace kvbudget {

namespace {

template <class Cell>
std::string grid_table(const std::string& name, std::size_t layers, std::size_t heads, Cell&& cell) {
    std::string out = "## " + name + "\nlayer";
    for (std::size_t h = 0; h < heads; ++h) out += "\th" + std::to_string(h);
    out += '\n';
    for (std::size_t l = 0; l < layers; ++l) {
        out += std::to_string(l);
        for (std::size_t h = 0; h < heads; ++h) out += '\t' + cell(l, h);
        out += '\n';
    }
    out += '\n';
    return out;
}

}  // namespace

std::string heatmap_report(const ScoreHeatmap& hm, const ReportOptions& options) {
    std::string out = "# report = heatmap\n# aggregation = " + aggregation_tag(hm.aggregation()) + "\n\n";
    for (auto m : kAllMetrics)
        out += grid_table(metric_name(m), hm.layers(), hm.heads(),
                          [&](std::size_t l, std::size_t h) { return format_real(hm.value(m, l, h)); });

    out += "## beta-sweep budget=" + std::to_string(options.budget) + " floor=" + format_real(options.floor) + "\n";
    out += "beta\tb_fixed\tb_total\ttotal_capacity\tclosed_form_total\tmin_capacity\tmax_capacity\n";
    for (double beta : options.betas) {
        const auto plan = allocate({options.budget, beta, options.floor}, hm);
        const auto total = plan_total(plan);
        const auto [mn, mx] = std::minmax_element(plan.capacities.begin(), plan.capacities.end());
        out += format_real(beta) + '\t' + format_real(plan.b_fixed) + '\t' + format_real(plan.b_total) + '\t' +
               std::to_string(total.rounded) + '\t' + format_real(total.closed_form) + '\t' + std::to_string(*mn) +
               '\t' + std::to_string(*mx) + '\n';
    }
    out += '\n';
    for (double beta : options.betas) {
        const auto plan = allocate({options.budget, beta, options.floor}, hm);
        out += grid_table("capacity beta=" + format_real(beta), plan.layers, plan.heads,
                          [&](std::size_t l, std::size_t h) { return std::to_string(plan.capacity(l, h)); });
    }

    if (options.thresholds) {
        const auto share = class_shares(hm, *options.thresholds);
        out += "## behavior-classes " + options.thresholds->describe() + "\nclass\theads\tpercent\n";
        for (auto c : {BehaviorClass::Wide, BehaviorClass::LogicConstruction, BehaviorClass::SurfaceMemorization})
            out += behavior_class_name(c) + '\t' + std::to_string(share.counts[static_cast<std::size_t>(c)]) + '\t' +
                   format_real(share.percent(c)) + '\n';
        out += '\n';
        out += grid_table("behavior-class", hm.layers(), hm.heads(), [&](std::size_t l, std::size_t h) {
            return behavior_class_name(classify_behavior(hm.at(l, h), *options.thresholds));
        });
    }
    return out;
}

std::string plan_report(const BudgetPlan& plan) {
    std::string out = "# report = plan\n# budget = " + std::to_string(plan.config.budget) +
                      "\n# beta = " + format_real(plan.config.beta) + "\n\n";
    out += grid_table("capacity", plan.layers, plan.heads,
                      [&](std::size_t l, std::size_t h) { return std::to_string(plan.capacity(l, h)); });
    out += grid_table("head-importance", plan.layers, plan.heads, [&](std::size_t l, std::size_t h) {
        return format_real(plan.head_importance[l * plan.heads + h]);
    });
    out += "## layer-importance\nlayer\timportance\tcapacity\n";
    for (std::size_t l = 0; l < plan.layers; ++l) {
        std::size_t cap = 0;
        for (std::size_t h = 0; h < plan.heads; ++h) cap += plan.capacity(l, h);
        out += std::to_string(l) + '\t' + format_real(plan.layer_importance[l]) + '\t' + std::to_string(cap) + '\n';
    }
    return out;
}

std::string summary_report(const CompressionSummary& s) {
    std::string out = "# report = summary\n\n";
    std::vector<std::size_t> retained(s.layers * s.heads, 0), original(s.layers * s.heads, 0);
    for (const auto& r : s.rows) {
        retained[r.layer * s.heads + r.head] = r.retained;
        original[r.layer * s.heads + r.head] = r.original_len;
    }
    out += grid_table("retained", s.layers, s.heads,
                      [&](std::size_t l, std::size_t h) { return std::to_string(retained[l * s.heads + h]); });
    out += grid_table("ratio", s.layers, s.heads, [&](std::size_t l, std::size_t h) {
        const auto k = l * s.heads + h;
        return format_real(original[k] ? static_cast<double>(retained[k]) / static_cast<double>(original[k]) : 1.0);
    });
    out += "## layer-retained\nlayer\tretained\n";
    for (std::size_t l = 0; l < s.layers; ++l) out += std::to_string(l) + '\t' + std::to_string(s.layer_retained[l]) + '\n';
    out += "\n## total\noriginal\tcapacity\tretained\tratio\n" + std::to_string(s.total_original) + '\t' +
           std::to_string(s.total_capacity) + '\t' + std::to_string(s.total_retained) + '\t' + format_real(s.ratio()) +
           '\n';
    return out;
}

std::string traces_report(const std::vector<AttentionTrace>& traces) {
    std::size_t layers = 0, heads = 0;
    for (const auto& t : traces) {
        layers = std::max(layers, t.layer + 1);
        heads = std::max(heads, t.head + 1);
    }
    std::vector<std::size_t> count(layers * heads, 0);
    std::vector<double> needle_mass(layers * heads, 0.0);
    for (const auto& t : traces) {
        const auto k = t.layer * heads + t.head;
        ++count[k];
        for (auto i : t.needle_span) needle_mass[k] += t.weights[i];
    }
    std::string out = "# report = traces\n# trace_count = " + std::to_string(traces.size()) + "\n\n";
    out += grid_table("trace-count", layers, heads,
                      [&](std::size_t l, std::size_t h) { return std::to_string(count[l * heads + h]); });
    out += grid_table("mean-needle-mass", layers, heads, [&](std::size_t l, std::size_t h) {
        const auto k = l * heads + h;
        return format_real(count[k] ? needle_mass[k] / static_cast<double>(count[k]) : 0.0);
    });
    return out;
}

std::string probes_report(const std::vector<NeedleProbe>& probes) {
    std::string out = "# report = probes\n# probe_count = " + std::to_string(probes.size()) + "\n\n";
    out += "## probes\nprobe_id\tlength\tdepth\tneedle_start\tneedle_end\tanswer_tokens\n";
    for (const auto& p : probes)
        out += p.probe_id + '\t' + std::to_string(p.length()) + '\t' + format_real(p.depth) + '\t' +
               std::to_string(p.needle_span.front()) + '\t' + std::to_string(p.needle_span.back() + 1) + '\t' +
               std::to_string(p.answer_span.size()) + '\n';
    return out;
}

std::string report_for_file(const std::filesystem::path& path, const ReportOptions& options) {
    std::string contents = read_file(path);
    const std::string format = [&] {
        auto doc = parse_document(contents);
        const auto* f = doc.find("format");
        return f ? *f : std::string();
    }();
    if (format == "kvbudget-heatmap/1") return heatmap_report(parse_heatmap(std::move(contents)), options);
    if (format == "kvbudget-plan/1") return plan_report(parse_plan(std::move(contents)));
    if (format == "kvbudget-summary/1") return summary_report(parse_summary(std::move(contents)));
    if (format == "kvbudget-probes/1") return probes_report(parse_probes(std::move(contents)));
    if (format == "kvbudget-traces/1" || format.empty()) return traces_report(parse_traces(std::move(contents)));
    fail("unknown artifact format '" + format + "'");
}

}  // namespace kvbudget
