// Copyright (C) 2026 The kvbudget Authors
// SPDX-License-Identifier: Apache-2.0

#include "sim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <thread>
#include <tuple>

#include "error.hpp"
#include "rng.hpp"

namespace kvbudget {

std::string QueryRowPolicy::tag() const {
    if (kind == Kind::LastRow) return "last-query-row";
    return "window-mean:" + std::to_string(window);
}

QueryRowPolicy QueryRowPolicy::parse(std::string_view tag) {
    tag = trim(tag);
    if (tag == "last-query-row") return last_row();
    constexpr std::string_view prefix = "window-mean:";
    if (tag.starts_with(prefix)) {
        std::size_t rows = 0;
        try {
            rows = parse_count(tag.substr(prefix.size()), 0);
        } catch (const Error&) {
            rows = 0;
        }
        KVB_CHECK(rows > 0, "bad query row policy '" + std::string(tag) + "'");
        return window_mean(rows);
    }
    fail("bad query row policy '" + std::string(tag) + "'");
}

void ToyTransformerConfig::validate() const {
    KVB_CHECK(num_layers > 0 && num_heads > 0 && d_k > 0 && d_model > 0, "bad config: counts must be positive");
    KVB_CHECK(d_model == num_heads * d_k, "bad config: d_model must equal heads * d_k");
    KVB_CHECK(vocab_size >= kMinVocabSize, "bad config: vocabulary too small");
    KVB_CHECK(policy.window > 0, "bad config: query window must be positive");
}

namespace {

DenseMatrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
    DenseMatrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (double& x : m.row(r)) x = rng.normal() * scale;
    return m;
}

void rms_normalize_rows(DenseMatrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        double ss = 0.0;
        for (double x : row) ss += x * x;
        const double inv = 1.0 / std::sqrt(ss / static_cast<double>(row.size()) + 1e-6);
        for (double& x : row) x *= inv;
    }
}

std::size_t tail_rows(const QueryRowPolicy& policy) {
    return policy.kind == QueryRowPolicy::Kind::LastRow ? 1 : policy.window;
}

}  // namespace

ToyTransformer::ToyTransformer(ToyTransformerConfig config) : m_config(std::move(config)) {
    m_config.validate();
    Rng rng(derive_seed(m_config.seed, "toy-transformer"));
    const auto d = m_config.d_model;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    m_embedding = random_matrix(rng, m_config.vocab_size, d, 1.0);
    for (std::size_t l = 0; l < m_config.num_layers; ++l) {
        Layer layer;
        layer.wq = random_matrix(rng, d, d, scale);
        layer.wk = random_matrix(rng, d, d, scale);
        layer.wv = random_matrix(rng, d, d, scale);
        layer.wo = random_matrix(rng, d, d, scale);
        m_layers.push_back(std::move(layer));
    }
}

// Invokes on_head(layer, head, keys, values, tail_queries, tail_weights) for
// each head. Only the final layer skips the non-tail query rows.
template <class OnHead>
void ToyTransformer::forward(const TokenSequence& tokens, std::size_t tail, OnHead&& on_head) const {
    const auto n = tokens.size();
    const auto d = m_config.d_model;
    const auto dk = m_config.d_k;
    KVB_CHECK(n > 0, "empty token sequence");
    KVB_CHECK(tail >= 1 && tail <= n, "query window exceeds sequence length");

    DenseMatrix x(n, d);
    for (std::size_t t = 0; t < n; ++t) {
        KVB_CHECK(tokens.tokens[t] < m_config.vocab_size, "token id out of vocabulary");
        auto row = x.row(t);
        auto emb = m_embedding.row(tokens.tokens[t]);
        for (std::size_t c = 0; c < d; c += 2) {
            const double freq = std::pow(10000.0, -static_cast<double>(c) / static_cast<double>(d));
            row[c] = emb[c] + std::sin(static_cast<double>(t) * freq);
            if (c + 1 < d) row[c + 1] = emb[c + 1] + std::cos(static_cast<double>(t) * freq);
        }
    }

    std::vector<double> weights(n);
    std::vector<double> out_row(dk);
    for (std::size_t l = 0; l < m_layers.size(); ++l) {
        const auto& layer = m_layers[l];
        const bool last_layer = l + 1 == m_layers.size();
        const std::size_t first_query = last_layer ? n - tail : 0;

        DenseMatrix h = x;
        rms_normalize_rows(h);
        const DenseMatrix k = matmul(h, layer.wk);
        const DenseMatrix v = matmul(h, layer.wv);
        std::vector<std::size_t> query_rows(n - first_query);
        std::iota(query_rows.begin(), query_rows.end(), first_query);
        const DenseMatrix q = matmul(h.gather_rows(query_rows), layer.wq);

        DenseMatrix concat(last_layer ? 0 : n, last_layer ? 0 : d);
        for (std::size_t head = 0; head < m_config.num_heads; ++head) {
            const DenseMatrix kh = k.column_block(head * dk, dk);
            const DenseMatrix vh = v.column_block(head * dk, dk);
            const DenseMatrix qh = q.column_block(head * dk, dk);
            std::vector<std::vector<double>> tail_weights;
            for (std::size_t r = 0; r < qh.rows(); ++r) {
                const std::size_t pos = first_query + r;
                attend_row(qh.row(r), kh, vh, pos + 1, weights, out_row);
                if (!last_layer) std::copy(out_row.begin(), out_row.end(), concat.row(pos).begin() + head * dk);
                if (pos >= n - tail) {
                    tail_weights.emplace_back(weights.begin(), weights.begin() + static_cast<std::ptrdiff_t>(pos + 1));
                }
            }
            std::vector<std::size_t> tail_idx(tail);
            std::iota(tail_idx.begin(), tail_idx.end(), qh.rows() - tail);
            on_head(l, head, kh, vh, qh.gather_rows(tail_idx), tail_weights);
        }
        if (!last_layer) {
            const DenseMatrix proj = matmul(concat, layer.wo);
            for (std::size_t r = 0; r < n; ++r) {
                auto dst = x.row(r);
                auto src = proj.row(r);
                for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
            }
        }
    }
}

std::vector<AttentionTrace> ToyTransformer::run_forward(const NeedleProbe& probe) const {
    KVB_CHECK(probe.tokens.vocab_size <= m_config.vocab_size, "probe vocabulary exceeds model vocabulary");
    std::vector<AttentionTrace> traces;
    traces.reserve(m_config.num_layers * m_config.num_heads);
    const auto n = probe.length();
    forward(probe.tokens, tail_rows(m_config.policy),
            [&](std::size_t layer, std::size_t head, const DenseMatrix&, const DenseMatrix&, const DenseMatrix&,
                const std::vector<std::vector<double>>& tail_weights) {
                AttentionTrace t;
                t.probe_id = probe.probe_id;
                t.layer = layer;
                t.head = head;
                t.policy = m_config.policy;
                t.sequence_length = n;
                t.needle_span = probe.needle_span;
                if (tail_weights.size() == 1) {
                    t.weights = tail_weights.front();
                } else {
                    t.weights.assign(n, 0.0);
                    for (const auto& row : tail_weights)
                        for (std::size_t j = 0; j < row.size(); ++j) t.weights[j] += row[j];
                    const double sum = std::accumulate(t.weights.begin(), t.weights.end(), 0.0);
                    for (double& w : t.weights) w /= sum;
                }
                traces.push_back(std::move(t));
            });
    return traces;
}

std::vector<HeadCapture> ToyTransformer::capture(const TokenSequence& tokens, std::size_t window) const {
    std::vector<HeadCapture> caches;
    forward(tokens, window,
            [&](std::size_t, std::size_t, const DenseMatrix& k, const DenseMatrix& v, const DenseMatrix& q,
                const std::vector<std::vector<double>>&) { caches.push_back({k, v, q}); });
    return caches;
}

std::vector<AttentionTrace> run_forward(const ToyTransformerConfig& config, const NeedleProbe& probe) {
    return ToyTransformer(config).run_forward(probe);
}

std::vector<AttentionTrace> run_forward_all(const ToyTransformerConfig& config, std::span<const NeedleProbe> probes,
                                            std::size_t threads) {
    const ToyTransformer model(config);
    std::vector<std::vector<AttentionTrace>> per_probe(probes.size());
    threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(probes.size(), 1));
    if (threads == 1) {
        for (std::size_t i = 0; i < probes.size(); ++i) per_probe[i] = model.run_forward(probes[i]);
    } else {
        std::vector<std::exception_ptr> errors(threads);
        {
            std::vector<std::jthread> workers;
            for (std::size_t w = 0; w < threads; ++w) {
                workers.emplace_back([&, w] {
                    try {
                        for (std::size_t i = w; i < probes.size(); i += threads)
                            per_probe[i] = model.run_forward(probes[i]);
                    } catch (...) {
                        errors[w] = std::current_exception();
                    }
                });
            }
        }
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }
    std::vector<AttentionTrace> all;
    all.reserve(probes.size() * config.num_layers * config.num_heads);
    for (auto& v : per_probe) std::move(v.begin(), v.end(), std::back_inserter(all));
    return all;
}

OracleMode parse_oracle_mode(std::string_view tag) {
    if (tag == "all-on-needle") return OracleMode::AllOnNeedle;
    if (tag == "all-off-needle") return OracleMode::AllOffNeedle;
    if (tag == "uniform") return OracleMode::Uniform;
    fail("unknown oracle mode '" + std::string(tag) + "'");
}

std::vector<AttentionTrace> oracle_trace(const NeedleProbe& probe, OracleMode mode, std::size_t layers,
                                         std::size_t heads) {
    const auto n = probe.length();
    const auto m = probe.needle_span.size();
    std::vector<double> w(n, 0.0);
    switch (mode) {
        case OracleMode::AllOnNeedle:
            for (auto i : probe.needle_span) w[i] = 1.0 / static_cast<double>(m);
            break;
        case OracleMode::AllOffNeedle:
            KVB_CHECK(n > m, "probe has no positions outside the needle");
            for (std::size_t i = 0; i < n; ++i)
                if (!probe.needle_span.contains(i)) w[i] = 1.0 / static_cast<double>(n - m);
            break;
        case OracleMode::Uniform:
            std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(n));
            break;
    }
    std::vector<AttentionTrace> traces;
    for (std::size_t l = 0; l < layers; ++l)
        for (std::size_t h = 0; h < heads; ++h)
            traces.push_back({probe.probe_id, l, h, QueryRowPolicy::last_row(), n, probe.needle_span, w});
    return traces;
}

std::string serialize_traces(std::span<const AttentionTrace> traces, const Metadata& meta) {
    std::string out = "# format = kvbudget-traces/1\n";
    append_metadata(out, meta);
    out += "# trace_count = " + std::to_string(traces.size()) + "\n";
    for (const auto& t : traces) {
        KVB_CHECK(t.weights.size() == t.sequence_length, "trace weight count differs from sequence length");
        KVB_CHECK(!t.needle_span.empty() && t.needle_span.is_contiguous(), "trace needle span must be contiguous");
        out += t.probe_id;
        out += '\t' + std::to_string(t.layer);
        out += '\t' + std::to_string(t.head);
        out += '\t' + t.policy.tag();
        out += '\t' + std::to_string(t.sequence_length);
        out += '\t' + std::to_string(t.needle_span.front()) + ':' + std::to_string(t.needle_span.back() + 1);
        out += '\t';
        out += format_reals(t.weights, ',');
        out += '\n';
    }
    return out;
}

std::vector<AttentionTrace> parse_traces(std::string contents) {
    auto doc = parse_document(std::move(contents));
    std::vector<AttentionTrace> traces;
    traces.reserve(doc.lines.size());
    for (const auto& [line_no, line] : doc.lines) {
        auto f = split(line, '\t');
        if (f.size() != 7) parse_fail(line_no, "expected 7 fields, found " + std::to_string(f.size()));
        AttentionTrace t;
        t.probe_id = std::string(f[0]);
        if (t.probe_id.empty()) parse_fail(line_no, "empty probe id");
        t.layer = parse_count(f[1], line_no);
        t.head = parse_count(f[2], line_no);
        try {
            t.policy = QueryRowPolicy::parse(f[3]);
        } catch (const Error& e) {
            parse_fail(line_no, e.what());
        }
        t.sequence_length = parse_count(f[4], line_no);
        auto span = split(f[5], ':');
        if (span.size() != 2) parse_fail(line_no, "needle span must be start:end");
        const auto s = parse_count(span[0], line_no), e = parse_count(span[1], line_no);
        if (e <= s || e > t.sequence_length) parse_fail(line_no, "needle span out of range");
        t.needle_span = IndexSet::range(s, e);
        t.weights = parse_reals(f[6], ',', line_no);
        if (t.weights.size() != t.sequence_length)
            parse_fail(line_no, "expected " + std::to_string(t.sequence_length) + " weights, found " +
                                    std::to_string(t.weights.size()));
        double sum = 0.0;
        for (double w : t.weights) {
            if (w < 0.0) parse_fail(line_no, "negative attention weight");
            sum += w;
        }
        if (sum > 1.0 + 1e-6) parse_fail(line_no, "attention weights sum above 1");
        traces.push_back(std::move(t));
    }
    return traces;
}

void write_traces(const std::filesystem::path& path, std::span<const AttentionTrace> traces, const Metadata& meta) {
    write_file(path, serialize_traces(traces, meta));
}

std::vector<AttentionTrace> read_traces(const std::filesystem::path& path) { return parse_traces(read_file(path)); }

void validate_traces(std::span<const AttentionTrace> traces, std::span<const NeedleProbe> probes, std::size_t layers,
                     std::size_t heads) {
    std::map<std::string, const NeedleProbe*, std::less<>> by_id;
    for (const auto& p : probes) by_id.emplace(p.probe_id, &p);

    std::vector<std::string> problems;
    std::set<std::tuple<std::string, std::size_t, std::size_t>> seen;
    for (const auto& t : traces) {
        const auto where = "(" + t.probe_id + ", " + std::to_string(t.layer) + ", " + std::to_string(t.head) + ")";
        auto it = by_id.find(t.probe_id);
        if (it == by_id.end()) {
            problems.push_back("unknown probe " + where);
            continue;
        }
        if (t.layer >= layers || t.head >= heads) problems.push_back("layer/head out of range " + where);
        if (!seen.emplace(t.probe_id, t.layer, t.head).second) problems.push_back("duplicate " + where);
        if (t.sequence_length != it->second->length()) problems.push_back("sequence length mismatch " + where);
        if (t.needle_span != it->second->needle_span) problems.push_back("needle span mismatch " + where);
    }
    for (const auto& p : probes)
        for (std::size_t l = 0; l < layers; ++l)
            for (std::size_t h = 0; h < heads; ++h)
                if (!seen.count({p.probe_id, l, h}))
                    problems.push_back("missing (" + p.probe_id + ", " + std::to_string(l) + ", " +
                                       std::to_string(h) + ")");
    if (problems.empty()) return;

    std::string msg = "coverage mismatch: " + std::to_string(problems.size()) + " problem(s)";
    constexpr std::size_t kShown = 20;
    for (std::size_t i = 0; i < std::min(kShown, problems.size()); ++i) msg += "\n  " + problems[i];
    if (problems.size() > kShown) msg += "\n  ... and " + std::to_string(problems.size() - kShown) + " more";
    fail(msg);
}

}  // namespace kvbudget
