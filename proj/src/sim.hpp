// Copyright (C) 2026 The kvbudget Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "attention.hpp"
#include "niah.hpp"
#include "textio.hpp"

namespace kvbudget {

/// Which query rows produce a head's analyzed weight vector.
struct QueryRowPolicy {
    enum class Kind { LastRow, WindowMean };
    Kind kind = Kind::LastRow;
    std::size_t window = 1;  // rows averaged under WindowMean

    static QueryRowPolicy last_row() { return {}; }
    static QueryRowPolicy window_mean(std::size_t rows) { return {Kind::WindowMean, rows}; }

    /// "last-query-row" or "window-mean:<rows>".
    std::string tag() const;
    static QueryRowPolicy parse(std::string_view tag);

    bool operator==(const QueryRowPolicy&) const = default;
};

struct ToyTransformerConfig {
    std::size_t num_layers = 4;
    std::size_t num_heads = 4;
    std::size_t d_model = 128;
    std::size_t d_k = 32;
    std::size_t vocab_size = 1024;
    std::uint64_t seed = 0;
    QueryRowPolicy policy;

    /// Throws "bad config" unless d_model == heads * d_k and counts are positive.
    void validate() const;
};

struct AttentionTrace {
    std::string probe_id;
    std::size_t layer = 0;
    std::size_t head = 0;
    QueryRowPolicy policy;
    std::size_t sequence_length = 0;
    IndexSet needle_span;  // contiguous
    std::vector<double> weights;

    bool operator==(const AttentionTrace&) const = default;
};

/// Per-head cache contents captured from a forward pass: every key and value
/// row, plus the query rows of the trailing window.
struct HeadCapture {
    DenseMatrix keys;
    DenseMatrix values;
    DenseMatrix window_queries;
};

/// Decoder-only attention stack with seeded weights: token embeddings plus
/// sinusoidal positions, then per layer an RMS-normalized input, causal
/// multi-head attention and a residual output projection. No MLP.
class ToyTransformer {
public:
    explicit ToyTransformer(ToyTransformerConfig config);

    const ToyTransformerConfig& config() const noexcept { return m_config; }

    /// One trace per (layer, head), layer-major.
    std::vector<AttentionTrace> run_forward(const NeedleProbe& probe) const;

    /// Caches per (layer, head), layer-major, with `window` trailing query rows.
    std::vector<HeadCapture> capture(const TokenSequence& tokens, std::size_t window) const;

private:
    struct Layer {
        DenseMatrix wq, wk, wv, wo;
    };

    template <class OnHead>
    void forward(const TokenSequence& tokens, std::size_t tail_rows, OnHead&& on_head) const;

    ToyTransformerConfig m_config;
    DenseMatrix m_embedding;
    std::vector<Layer> m_layers;
};

std::vector<AttentionTrace> run_forward(const ToyTransformerConfig& config, const NeedleProbe& probe);

/// Runs every probe, in order. `threads` > 1 splits probes across workers;
/// output order does not depend on it.
std::vector<AttentionTrace> run_forward_all(const ToyTransformerConfig& config, std::span<const NeedleProbe> probes,
                                            std::size_t threads = 1);

enum class OracleMode { AllOnNeedle, AllOffNeedle, Uniform };
OracleMode parse_oracle_mode(std::string_view tag);

/// Synthetic traces with analytically known scores, one per (layer, head).
/// AllOnNeedle: uniform mass on the needle. AllOffNeedle: uniform mass on
/// every position outside the needle. Uniform: 1/n everywhere.
std::vector<AttentionTrace> oracle_trace(const NeedleProbe& probe, OracleMode mode, std::size_t layers = 1,
                                         std::size_t heads = 1);

/// Record: probe_id, layer, head, query_row_policy, sequence_length,
/// needle start:end, weights (comma separated). Tab separated, 7 fields.
std::string serialize_traces(std::span<const AttentionTrace> traces, const Metadata& meta);
std::vector<AttentionTrace> parse_traces(std::string contents);

void write_traces(const std::filesystem::path& path, std::span<const AttentionTrace> traces, const Metadata& meta);
std::vector<AttentionTrace> read_traces(const std::filesystem::path& path);

/// Checks traces against a probe set: every (probe, layer, head) in
/// probes x [0, layers) x [0, heads) present exactly once, with matching
/// sequence length and needle span. Throws listing every problem.
void validate_traces(std::span<const AttentionTrace> traces, std::span<const NeedleProbe> probes,
                     std::size_t layers, std::size_t heads);

}  // namespace kvbudget
