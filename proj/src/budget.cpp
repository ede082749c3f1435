// Copyright (C) 2026 The kvbudget Authors
// SPDX-License-Identifier: Apache-2.0

#include "budget.hpp"

#include <cmath>
#include <numeric>

#include "error.hpp"

namespace kvbudget {

void AllocatorConfig::validate() const {
    KVB_CHECK(std::isfinite(beta) && beta > 1.0, "invalid ratio: beta must exceed 1");
    KVB_CHECK(budget >= 1, "budget must be at least 1 token per head");
    KVB_CHECK(std::isfinite(floor) && floor >= 0.0, "layer floor must be nonnegative");
}

BudgetPlan allocate(const AllocatorConfig& config, const ScoreHeatmap& heatmap) {
    config.validate();
    const auto L = heatmap.layers(), H = heatmap.heads();
    KVB_CHECK(L > 0 && H > 0, "heatmap/config mismatch: empty heatmap");
    const auto inf = heatmap.inf_grid();
    for (double x : inf) KVB_CHECK(std::isfinite(x) && x >= 0.0, "INFsc values must be nonnegative");

    BudgetPlan plan;
    plan.layers = L;
    plan.heads = H;
    plan.config = config;
    const double b = static_cast<double>(config.budget);
    plan.b_fixed = b * (1.0 - 1.0 / config.beta);
    plan.b_total = b / config.beta * static_cast<double>(L * H);

    std::vector<double> layer_mass(L, 0.0);
    for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < H; ++j) layer_mass[i] += inf[i * H + j];
    const double total = std::accumulate(layer_mass.begin(), layer_mass.end(), 0.0);

    plan.layer_importance.resize(L);
    plan.head_importance.resize(L * H);
    if (total > 0.0) {
        for (std::size_t i = 0; i < L; ++i) plan.layer_importance[i] = layer_mass[i] / total;
        for (std::size_t k = 0; k < L * H; ++k) plan.head_importance[k] = inf[k] / total;
    } else {
        plan.uniform_fallback = true;
        std::fill(plan.layer_importance.begin(), plan.layer_importance.end(), 1.0 / static_cast<double>(L));
        std::fill(plan.head_importance.begin(), plan.head_importance.end(), 1.0 / static_cast<double>(L * H));
    }

    plan.unrounded.resize(L * H);
    plan.capacities.resize(L * H);
    for (std::size_t i = 0; i < L; ++i) {
        for (std::size_t j = 0; j < H; ++j) {
            const auto k = i * H + j;
            const double dynamic = plan.b_total * (config.floor + plan.layer_importance[i]) * plan.head_importance[k];
            const double cap = plan.b_fixed + dynamic;
            plan.unrounded[k] = cap;
            plan.capacities[k] = static_cast<std::size_t>(std::floor(std::max(0.0, cap) + 0.5));
        }
    }
    return plan;
}

PlanTotal plan_total(const BudgetPlan& plan) {
    PlanTotal t;
    t.rounded = std::accumulate(plan.capacities.begin(), plan.capacities.end(), std::size_t{0});
    double sq = 0.0;
    for (double x : plan.layer_importance) sq += x * x;
    t.closed_form =
        plan.b_fixed * static_cast<double>(plan.layers * plan.heads) + plan.b_total * (plan.config.floor + sq);
    return t;
}

namespace {

template <class T>
std::string join_row(const std::vector<T>& v, std::size_t first, std::size_t count) {
    std::string out;
    for (std::size_t k = 0; k < count; ++k) {
        if (k) out += ' ';
        if constexpr (std::is_same_v<T, double>)
            out += format_real(v[first + k]);
        else
            out += std::to_string(v[first + k]);
    }
    return out;
}

}  // namespace

std::string serialize_plan(const BudgetPlan& plan, const Metadata& meta) {
    std::string out = "# format = kvbudget-plan/1\n";
    append_metadata(out, meta);
    const auto L = plan.layers, H = plan.heads;
    auto kv = [&](const std::string& k, const std::string& v) { out += k + " = " + v + "\n"; };
    kv("layers", std::to_string(L));
    kv("heads", std::to_string(H));
    kv("budget", std::to_string(plan.config.budget));
    kv("beta", format_real(plan.config.beta));
    kv("floor", format_real(plan.config.floor));
    kv("b_fixed", format_real(plan.b_fixed));
    kv("b_total", format_real(plan.b_total));
    kv("uniform_fallback", plan.uniform_fallback ? "1" : "0");
    kv("layer_importance", join_row(plan.layer_importance, 0, L));
    for (std::size_t i = 0; i < L; ++i) kv("head_importance." + std::to_string(i), join_row(plan.head_importance, i * H, H));
    for (std::size_t i = 0; i < L; ++i) kv("capacity." + std::to_string(i), join_row(plan.capacities, i * H, H));
    const auto total = plan_total(plan);
    kv("total_capacity", std::to_string(total.rounded));
    kv("closed_form_total", format_real(total.closed_form));
    return out;
}

BudgetPlan parse_plan(std::string contents) {
    auto doc = parse_document(std::move(contents));
    std::map<std::string, std::pair<std::size_t, std::string>, std::less<>> kv;
    for (const auto& [line_no, line] : doc.lines) {
        auto eq = line.find('=');
        if (eq == std::string_view::npos) parse_fail(line_no, "expected key = value");
        auto key = std::string(trim(line.substr(0, eq)));
        if (!kv.emplace(key, std::make_pair(line_no, std::string(trim(line.substr(eq + 1))))).second)
            parse_fail(line_no, "duplicate key '" + key + "'");
    }
    auto get = [&](const std::string& key) -> const std::pair<std::size_t, std::string>& {
        auto it = kv.find(key);
        if (it == kv.end()) parse_fail(doc.lines.empty() ? 1 : doc.lines.back().first, "missing key '" + key + "'");
        return it->second;
    };
    auto reals = [&](const std::string& key, std::size_t n) {
        const auto& [line, value] = get(key);
        auto v = parse_reals(value, ' ', line);
        if (v.size() != n) parse_fail(line, "expected " + std::to_string(n) + " values for '" + key + "'");
        return v;
    };

    BudgetPlan plan;
    plan.layers = parse_count(get("layers").second, get("layers").first);
    plan.heads = parse_count(get("heads").second, get("heads").first);
    if (plan.layers == 0 || plan.heads == 0) parse_fail(get("layers").first, "empty plan");
    plan.config.budget = parse_count(get("budget").second, get("budget").first);
    plan.config.beta = parse_real(get("beta").second, get("beta").first);
    plan.config.floor = parse_real(get("floor").second, get("floor").first);
    plan.b_fixed = parse_real(get("b_fixed").second, get("b_fixed").first);
    plan.b_total = parse_real(get("b_total").second, get("b_total").first);
    plan.uniform_fallback = get("uniform_fallback").second == "1";
    plan.layer_importance = reals("layer_importance", plan.layers);
    for (std::size_t i = 0; i < plan.layers; ++i) {
        auto h = reals("head_importance." + std::to_string(i), plan.heads);
        plan.head_importance.insert(plan.head_importance.end(), h.begin(), h.end());
        const auto& [line, value] = get("capacity." + std::to_string(i));
        auto parts = split(value, ' ');
        if (parts.size() != plan.heads) parse_fail(line, "expected " + std::to_string(plan.heads) + " capacities");
        for (auto p : parts) plan.capacities.push_back(parse_count(p, line));
    }
    // Recompute the unrounded values from the recorded importances.
    for (std::size_t i = 0; i < plan.layers; ++i)
        for (std::size_t j = 0; j < plan.heads; ++j)
            plan.unrounded.push_back(plan.b_fixed + plan.b_total * (plan.config.floor + plan.layer_importance[i]) *
                                                        plan.head_importance[i * plan.heads + j]);
    return plan;
}

void write_plan(const std::filesystem::path& path, const BudgetPlan& plan, const Metadata& meta) {
    write_file(path, serialize_plan(plan, meta));
}

BudgetPlan read_plan(const std::filesystem::path& path) { return parse_plan(read_file(path)); }

}  // namespace kvbudget
