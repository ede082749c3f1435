// Copyright (C) 2026 The kvbudget Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "attention.hpp"
#include "budget.hpp"
#include "textio.hpp"

namespace kvbudget {

struct KVCacheHead {
    DenseMatrix keys;
    DenseMatrix values;
    std::vector<std::size_t> positions;  // absolute, strictly increasing

    std::size_t length() const noexcept { return positions.size(); }
    /// Positions 0..keys.rows()-1.
    static KVCacheHead from_rows(DenseMatrix keys, DenseMatrix values);
    void validate() const;
};

struct CompressionResult {
    IndexSet retained_positions;
    DenseMatrix keys;
    DenseMatrix values;
    std::size_t capacity_used = 0;
    bool was_compressed = false;
};

struct SelectOptions {
    /// Odd max-pool width applied to history relevance; 0 or 1 disables it.
    std::size_t pool_kernel = 0;
};

/// Per-history-position relevance: column sums of
/// softmax(q_window · historyᵀ / √d_k) over the window rows, optionally
/// max-pooled along the key axis.
std::vector<double> history_relevance(const DenseMatrix& q_window, const DenseMatrix& history_keys,
                                      const SelectOptions& options = {});

/// Keeps the last `window` entries and the most relevant older entries,
/// `capacity` entries in total. Caches no longer than `capacity` are returned
/// unchanged; a capacity at or below the window keeps the newest `capacity`.
CompressionResult select_kv(const DenseMatrix& q_window, const KVCacheHead& cache, std::size_t capacity,
                            std::size_t window, const SelectOptions& options = {});

struct HeadSummary {
    std::size_t layer = 0;
    std::size_t head = 0;
    std::size_t original_len = 0;
    std::size_t capacity = 0;
    std::size_t retained = 0;
};

struct CompressionSummary {
    std::size_t layers = 0;
    std::size_t heads = 0;
    std::vector<HeadSummary> rows;  // layer-major
    std::size_t total_original = 0;
    std::size_t total_capacity = 0;
    std::size_t total_retained = 0;
    std::vector<std::size_t> layer_retained;

    double ratio() const {
        return total_original ? static_cast<double>(total_retained) / static_cast<double>(total_original) : 1.0;
    }
};

struct ModelCompression {
    std::vector<CompressionResult> heads;  // layer-major
    CompressionSummary summary;
};

/// Applies select_kv to every head with its planned capacity. `caches` and
/// `q_windows` are layer-major with plan.layers * plan.heads entries.
ModelCompression compress_model(const std::vector<KVCacheHead>& caches, const BudgetPlan& plan,
                                const std::vector<DenseMatrix>& q_windows, std::size_t window,
                                const SelectOptions& options = {});

/// Tabular: layer, head, original_len, capacity, retained, ratio, then a
/// `total` line.
std::string serialize_summary(const CompressionSummary& summary, const Metadata& meta);
void write_summary(const std::filesystem::path& path, const CompressionSummary& summary, const Metadata& meta);
CompressionSummary parse_summary(std::string contents);

}  // namespace kvbudget
