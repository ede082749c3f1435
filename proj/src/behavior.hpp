// Copyright (C) 2026 The kvbudget Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "attention.hpp"
#include "sim.hpp"
#include "textio.hpp"

namespace kvbudget {

/// Weight decomposition of one head's attention row against the needle
/// positions N and the head's top-k positions T.
struct BehaviorScores {
    double wo = 0.0;    // mass on N ∩ T
    double wd = 0.0;    // mass on T \ N
    double tnw = 0.0;   // mass on N
    double ws = 0.0;    // max(0, tnw - wo)
    double wide = 0.0;  // remaining mass, diagnostics only
    double sf_sc = 0.0;
    double lg_sc = 0.0;
    double inf_sc = 0.0;
};

/// Harmonic mean; 0 when both are 0.
double infsc_harmonic(double sf, double lg);

/// SF = WO/(WO+WD), LG = WO/(WO+WS), INF = harmonic mean. Any score whose
/// denominator is zero is 0. Throws "bad index set" on out-of-range indices
/// and rejects negative weights.
BehaviorScores analyze_head(std::span<const double> w, const IndexSet& needle, const IndexSet& top_k);

/// How many top positions form T for a trace.
struct TopKPolicy {
    std::size_t fixed_k = 0;  // 0 selects |needle|

    std::size_t k_for(const AttentionTrace& trace) const { return fixed_k ? fixed_k : trace.needle_span.size(); }
    /// "needle-length" or a positive integer.
    std::string tag() const;
    static TopKPolicy parse(std::string_view tag);
};

/// T = top-k of the trace's own weights.
BehaviorScores analyze_trace(const AttentionTrace& trace, const TopKPolicy& policy);

enum class Aggregation { Mean, Max };
std::string aggregation_tag(Aggregation a);
Aggregation parse_aggregation(std::string_view tag);

enum class Metric { SfSc, LgSc, InfSc, Wo, Wd, Ws, Wide };
inline constexpr std::array<Metric, 7> kAllMetrics{Metric::SfSc, Metric::LgSc, Metric::InfSc, Metric::Wo,
                                                   Metric::Wd,   Metric::Ws,   Metric::Wide};
std::string metric_name(Metric m);
double metric_value(const BehaviorScores& s, Metric m);

/// Layer x head grids for every metric, reduced over probes.
class ScoreHeatmap {
public:
    ScoreHeatmap() = default;
    ScoreHeatmap(std::size_t layers, std::size_t heads, Aggregation aggregation);

    std::size_t layers() const noexcept { return m_layers; }
    std::size_t heads() const noexcept { return m_heads; }
    Aggregation aggregation() const noexcept { return m_aggregation; }
    std::size_t probe_count(std::size_t layer, std::size_t head) const { return m_counts[layer * m_heads + head]; }

    const BehaviorScores& at(std::size_t layer, std::size_t head) const { return m_cells[layer * m_heads + head]; }
    BehaviorScores& at(std::size_t layer, std::size_t head) { return m_cells[layer * m_heads + head]; }
    void set_probe_count(std::size_t layer, std::size_t head, std::size_t n) { m_counts[layer * m_heads + head] = n; }

    double value(Metric m, std::size_t layer, std::size_t head) const { return metric_value(at(layer, head), m); }
    /// INFsc grid, row-major L x H.
    std::vector<double> inf_grid() const;

    /// Heatmap whose INFsc entries are `inf` (row-major), other metrics zero.
    static ScoreHeatmap from_inf(std::size_t layers, std::size_t heads, std::span<const double> inf);

private:
    std::size_t m_layers = 0;
    std::size_t m_heads = 0;
    Aggregation m_aggregation = Aggregation::Mean;
    std::vector<BehaviorScores> m_cells;
    std::vector<std::size_t> m_counts;
};

/// Key: (probe id, layer, head).
using ProbeScores = std::map<std::tuple<std::string, std::size_t, std::size_t>, BehaviorScores>;

/// Per-metric reduction over probes for every (layer, head) in [0,L) x [0,H).
/// Throws "incomplete trace coverage" listing pairs without any probe.
ScoreHeatmap aggregate_grid(const ProbeScores& per_probe, std::size_t layers, std::size_t heads,
                            Aggregation aggregation = Aggregation::Mean);

/// analyze_trace over every trace, then aggregate_grid with L and H taken as
/// one past the largest layer and head seen.
ScoreHeatmap score_traces(std::span<const AttentionTrace> traces, const TopKPolicy& policy,
                          Aggregation aggregation = Aggregation::Mean);

enum class BehaviorClass { Wide, LogicConstruction, SurfaceMemorization };
std::string behavior_class_name(BehaviorClass c);

/// Rules, applied in order: inf < wide_below → Wide; lg ≥ logic_min and
/// lg ≥ sf → LogicConstruction; sf ≥ surface_min → SurfaceMemorization;
/// otherwise Wide. All thresholds in [0, 1]; wide_below may not exceed either
/// of the other two.
struct BehaviorThresholds {
    double wide_below = 0.05;
    double logic_min = 0.5;
    double surface_min = 0.5;

    void validate() const;
    std::string describe() const;
};

BehaviorClass classify_behavior(const BehaviorScores& scores, const BehaviorThresholds& thresholds);

struct ClassShare {
    std::array<std::size_t, 3> counts{};  // indexed by BehaviorClass
    std::size_t total = 0;
    double percent(BehaviorClass c) const;
};

ClassShare class_shares(const ScoreHeatmap& heatmap, const BehaviorThresholds& thresholds);

/// Tabular: layer, head, sf_sc, lg_sc, inf_sc, wo, wd, ws, wide, probe_count.
std::string serialize_heatmap(const ScoreHeatmap& heatmap, const Metadata& meta);
ScoreHeatmap parse_heatmap(std::string contents);
void write_heatmap(const std::filesystem::path& path, const ScoreHeatmap& heatmap, const Metadata& meta);
ScoreHeatmap read_heatmap(const std::filesystem::path& path);

}  // namespace kvbudget
