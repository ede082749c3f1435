// Copyright (C) 2026 The kvbudget Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "behavior.hpp"
#include "budget.hpp"
#include "compressor.hpp"
#include "niah.hpp"
#include "sim.hpp"

namespace kvbudget {

struct ReportOptions {
    std::size_t budget = 64;
    double floor = kDefaultLayerFloor;
    std::vector<double> betas{1.2, kDefaultBeta, 1.5, 2.0};
    std::optional<BehaviorThresholds> thresholds;
};

/// Plot-ready tables for any pipeline artifact. Sections start with
/// `## <name>` followed by a tab-separated table.
std::string heatmap_report(const ScoreHeatmap& heatmap, const ReportOptions& options);
std::string plan_report(const BudgetPlan& plan);
std::string summary_report(const CompressionSummary& summary);
std::string traces_report(const std::vector<AttentionTrace>& traces);
std::string probes_report(const std::vector<NeedleProbe>& probes);

/// Detects the artifact kind from its `format` header; headerless files are
/// read as traces.
std::string report_for_file(const std::filesystem::path& path, const ReportOptions& options);

}  // namespace kvbudget
