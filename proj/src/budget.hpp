// Copyright (C) 2026 The kvbudget Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "behavior.hpp"
#include "textio.hpp"

namespace kvbudget {

inline constexpr double kDefaultBeta = 1.351;
inline constexpr double kDefaultLayerFloor = 0.01;

struct AllocatorConfig {
    std::size_t budget = 64;  // base tokens per head
    double beta = kDefaultBeta;
    double floor = kDefaultLayerFloor;

    void validate() const;
    bool operator==(const AllocatorConfig&) const = default;
};

/// Per-head KV capacities. Each head keeps b(1 - 1/β) tokens and draws from
/// a pool of (b/β)·L·H tokens in proportion to (ε + layer share)·head share,
/// where shares are fractions of the total INFsc mass.
struct BudgetPlan {
    std::size_t layers = 0;
    std::size_t heads = 0;
    AllocatorConfig config;
    double b_fixed = 0.0;
    double b_total = 0.0;
    bool uniform_fallback = false;            // total INFsc was zero
    std::vector<double> layer_importance;     // L
    std::vector<double> head_importance;      // L x H, row-major
    std::vector<double> unrounded;            // L x H, before rounding
    std::vector<std::size_t> capacities;      // L x H, row-major

    std::size_t capacity(std::size_t layer, std::size_t head) const { return capacities[layer * heads + head]; }

    bool operator==(const BudgetPlan&) const = default;
};

BudgetPlan allocate(const AllocatorConfig& config, const ScoreHeatmap& heatmap);

struct PlanTotal {
    std::size_t rounded = 0;
    /// b_fixed·L·H + B_total·(ε + Σ_i layer_importance_i²)
    double closed_form = 0.0;
};

PlanTotal plan_total(const BudgetPlan& plan);

std::string serialize_plan(const BudgetPlan& plan, const Metadata& meta);
BudgetPlan parse_plan(std::string contents);
void write_plan(const std::filesystem::path& path, const BudgetPlan& plan, const Metadata& meta);
BudgetPlan read_plan(const std::filesystem::path& path);

}  // namespace kvbudget
