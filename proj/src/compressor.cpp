// Copyright (C) 2026 The kvbudget Authors
// SPDX-License-Identifier: Apache-2.0

#include "compressor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "error.hpp"

namespace kvbudget {

KVCacheHead KVCacheHead::from_rows(DenseMatrix keys, DenseMatrix values) {
    KVCacheHead c{std::move(keys), std::move(values), {}};
    c.positions.resize(c.keys.rows());
    std::iota(c.positions.begin(), c.positions.end(), std::size_t{0});
    return c;
}

void KVCacheHead::validate() const {
    KVB_CHECK(keys.rows() == values.rows() && keys.rows() == positions.size(), "shape error");
    for (std::size_t i = 1; i < positions.size(); ++i)
        KVB_CHECK(positions[i - 1] < positions[i], "cache positions must be strictly increasing");
}

std::vector<double> history_relevance(const DenseMatrix& q_window, const DenseMatrix& history_keys,
                                      const SelectOptions& options) {
    KVB_CHECK(q_window.cols() == history_keys.cols(), "shape error");
    std::vector<double> relevance(history_keys.rows(), 0.0);
    if (history_keys.rows() == 0) return relevance;

    const DenseMatrix scores = scaled_dot_product_attention(q_window, history_keys, history_keys, false).weights;
    for (std::size_t r = 0; r < scores.rows(); ++r) {
        auto row = scores.row(r);
        for (std::size_t j = 0; j < row.size(); ++j) relevance[j] += row[j];
    }

    if (options.pool_kernel > 1) {
        KVB_CHECK(options.pool_kernel % 2 == 1, "pool kernel must be odd");
        const std::size_t half = options.pool_kernel / 2;
        std::vector<double> pooled(relevance.size());
        for (std::size_t j = 0; j < relevance.size(); ++j) {
            const std::size_t lo = j >= half ? j - half : 0;
            const std::size_t hi = std::min(relevance.size(), j + half + 1);
            pooled[j] = *std::max_element(relevance.begin() + static_cast<std::ptrdiff_t>(lo),
                                          relevance.begin() + static_cast<std::ptrdiff_t>(hi));
        }
        relevance = std::move(pooled);
    }
    return relevance;
}

namespace {

CompressionResult gather(const KVCacheHead& cache, std::vector<std::size_t> rows, bool compressed) {
    CompressionResult r;
    r.keys = cache.keys.gather_rows(rows);
    r.values = cache.values.gather_rows(rows);
    std::vector<std::size_t> positions;
    positions.reserve(rows.size());
    for (auto row : rows) positions.push_back(cache.positions[row]);
    r.retained_positions = IndexSet(std::move(positions));
    r.capacity_used = rows.size();
    r.was_compressed = compressed;
    return r;
}

}  // namespace

CompressionResult select_kv(const DenseMatrix& q_window, const KVCacheHead& cache, std::size_t capacity,
                            std::size_t window, const SelectOptions& options) {
    cache.validate();
    KVB_CHECK(window >= 1, "window must be positive");
    KVB_CHECK(q_window.rows() == window && q_window.cols() == cache.keys.cols(), "shape error");
    KVB_CHECK(q_window.cols() > 0, "empty head dimension");
    const std::size_t n = cache.length();
    KVB_CHECK(window <= n, "window exceeds cache");

    std::vector<std::size_t> keep;
    if (n <= capacity) {
        keep.resize(n);
        std::iota(keep.begin(), keep.end(), std::size_t{0});
        return gather(cache, std::move(keep), false);
    }
    if (capacity <= window) {
        keep.resize(capacity);
        std::iota(keep.begin(), keep.end(), n - capacity);
        return gather(cache, std::move(keep), true);
    }

    const std::size_t history = n - window;
    std::vector<std::size_t> history_rows(history);
    std::iota(history_rows.begin(), history_rows.end(), std::size_t{0});
    const auto relevance = history_relevance(q_window, cache.keys.gather_rows(history_rows), options);
    const auto top = top_k_indices(relevance, capacity - window);
    keep.assign(top.begin(), top.end());
    for (std::size_t i = history; i < n; ++i) keep.push_back(i);
    return gather(cache, std::move(keep), true);
}

ModelCompression compress_model(const std::vector<KVCacheHead>& caches, const BudgetPlan& plan,
                                const std::vector<DenseMatrix>& q_windows, std::size_t window,
                                const SelectOptions& options) {
    const auto count = plan.layers * plan.heads;
    KVB_CHECK(caches.size() == count && q_windows.size() == count,
              "coverage error: expected " + std::to_string(count) + " heads, got " + std::to_string(caches.size()) +
                  " caches and " + std::to_string(q_windows.size()) + " query windows");

    ModelCompression out;
    auto& s = out.summary;
    s.layers = plan.layers;
    s.heads = plan.heads;
    s.layer_retained.assign(plan.layers, 0);
    for (std::size_t l = 0; l < plan.layers; ++l) {
        for (std::size_t h = 0; h < plan.heads; ++h) {
            const auto k = l * plan.heads + h;
            const auto cap = plan.capacity(l, h);
            auto result = select_kv(q_windows[k], caches[k], cap, window, options);
            HeadSummary row{l, h, caches[k].length(), cap, result.retained_positions.size()};
            s.total_original += row.original_len;
            s.total_capacity += row.capacity;
            s.total_retained += row.retained;
            s.layer_retained[l] += row.retained;
            s.rows.push_back(row);
            out.heads.push_back(std::move(result));
        }
    }
    return out;
}

namespace {

double ratio(std::size_t retained, std::size_t original) {
    return original ? static_cast<double>(retained) / static_cast<double>(original) : 1.0;
}

constexpr std::string_view kSummaryColumns = "layer\thead\toriginal_len\tcapacity\tretained\tratio";

}  // namespace

std::string serialize_summary(const CompressionSummary& s, const Metadata& meta) {
    std::string out = "# format = kvbudget-summary/1\n";
    append_metadata(out, meta);
    out += "# layers = " + std::to_string(s.layers) + "\n";
    out += "# heads = " + std::to_string(s.heads) + "\n";
    std::string per_layer;
    for (std::size_t i = 0; i < s.layer_retained.size(); ++i) {
        if (i) per_layer += ' ';
        per_layer += std::to_string(s.layer_retained[i]);
    }
    out += "# layer_retained = " + per_layer + "\n";
    out += kSummaryColumns;
    out += '\n';
    for (const auto& r : s.rows) {
        out += std::to_string(r.layer) + '\t' + std::to_string(r.head) + '\t' + std::to_string(r.original_len) + '\t' +
               std::to_string(r.capacity) + '\t' + std::to_string(r.retained) + '\t' +
               format_real(ratio(r.retained, r.original_len)) + '\n';
    }
    out += "total\t-\t" + std::to_string(s.total_original) + '\t' + std::to_string(s.total_capacity) + '\t' +
           std::to_string(s.total_retained) + '\t' + format_real(s.ratio()) + '\n';
    return out;
}

void write_summary(const std::filesystem::path& path, const CompressionSummary& summary, const Metadata& meta) {
    write_file(path, serialize_summary(summary, meta));
}

CompressionSummary parse_summary(std::string contents) {
    auto doc = parse_document(std::move(contents));
    if (doc.lines.empty() || doc.lines.front().second != kSummaryColumns)
        parse_fail(doc.lines.empty() ? 1 : doc.lines.front().first, "expected summary column header");
    CompressionSummary s;
    const auto* layers = doc.find("layers");
    const auto* heads = doc.find("heads");
    if (!layers || !heads) parse_fail(1, "missing layers/heads header");
    s.layers = parse_count(*layers, 1);
    s.heads = parse_count(*heads, 1);
    s.layer_retained.assign(s.layers, 0);
    bool saw_total = false;
    for (std::size_t i = 1; i < doc.lines.size(); ++i) {
        const auto& [line_no, line] = doc.lines[i];
        auto f = split(line, '\t');
        if (f.size() != 6) parse_fail(line_no, "expected 6 fields, found " + std::to_string(f.size()));
        if (f[0] == "total") {
            saw_total = true;
            continue;
        }
        HeadSummary r{parse_count(f[0], line_no), parse_count(f[1], line_no), parse_count(f[2], line_no),
                      parse_count(f[3], line_no), parse_count(f[4], line_no)};
        if (r.layer >= s.layers || r.head >= s.heads) parse_fail(line_no, "layer/head outside declared dimensions");
        s.total_original += r.original_len;
        s.total_capacity += r.capacity;
        s.total_retained += r.retained;
        s.layer_retained[r.layer] += r.retained;
        s.rows.push_back(r);
    }
    if (!saw_total) parse_fail(doc.lines.back().first, "missing total line");
    return s;
}

}  // namespace kvbudget
