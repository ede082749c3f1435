// Copyright (C) 2026 The kvbudget Authors
// SPDX-License-Identifier: Apache-2.0

#include "niah.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "error.hpp"
#include "rng.hpp"

namespace kvbudget {

namespace {

void check_vocab(std::size_t vocab_size) { KVB_CHECK(vocab_size >= kMinVocabSize, "vocabulary too small"); }

TokenId word_token(std::string_view word, std::size_t vocab_size) {
    return static_cast<TokenId>(1 + fnv1a64(word) % (vocab_size - 1));
}

std::string join_tokens(std::span<const TokenId> tokens) {
    std::string out;
    out.reserve(tokens.size() * 4);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out.push_back(',');
        out += std::to_string(tokens[i]);
    }
    return out;
}

std::vector<TokenId> parse_tokens(std::string_view s, std::size_t line) {
    std::vector<TokenId> out;
    if (trim(s).empty()) return out;
    for (auto part : split(s, ',')) out.push_back(static_cast<TokenId>(parse_count(part, line)));
    return out;
}

std::vector<std::size_t> parse_indices(std::string_view s, std::size_t line) {
    std::vector<std::size_t> out;
    if (trim(s).empty()) return out;
    for (auto part : split(s, ',')) out.push_back(parse_count(part, line));
    return out;
}

}  // namespace

TokenSequence tokenize(std::string_view text, std::size_t vocab_size) {
    check_vocab(vocab_size);
    TokenSequence seq{{}, vocab_size};
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        if (j == i) break;
        std::string_view raw = text.substr(i, j - i);
        i = j;

        const bool ends_sentence = raw.back() == '.' || raw.back() == '!' || raw.back() == '?';
        std::size_t b = 0, e = raw.size();
        while (b < e && !std::isalnum(static_cast<unsigned char>(raw[b]))) ++b;
        while (e > b && !std::isalnum(static_cast<unsigned char>(raw[e - 1]))) --e;
        std::string word(raw.substr(b, e - b));
        std::transform(word.begin(), word.end(), word.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (!word.empty()) seq.tokens.push_back(word_token(word, vocab_size));
        if (ends_sentence) seq.tokens.push_back(kSeparatorToken);
    }
    return seq;
}

TokenSequence synthesize_haystack(std::size_t length, std::size_t vocab_size, std::uint64_t seed) {
    check_vocab(vocab_size);
    KVB_CHECK(length > 0, "haystack length must be positive");
    Rng rng(derive_seed(seed, "haystack"));
    TokenSequence seq{{}, vocab_size};
    seq.tokens.reserve(length);
    while (seq.tokens.size() < length) {
        const auto words = rng.below(6, 19);
        for (std::uint64_t w = 0; w < words && seq.tokens.size() < length; ++w)
            seq.tokens.push_back(static_cast<TokenId>(rng.below(1, vocab_size)));
        if (seq.tokens.size() < length) seq.tokens.push_back(kSeparatorToken);
    }
    return seq;
}

TokenSequence haystack_from_corpus(const TokenSequence& corpus, std::size_t length) {
    KVB_CHECK(!corpus.tokens.empty(), "haystack text is empty");
    TokenSequence seq{{}, corpus.vocab_size};
    seq.tokens.reserve(length);
    for (std::size_t i = 0; i < length; ++i) seq.tokens.push_back(corpus.tokens[i % corpus.tokens.size()]);
    return seq;
}

std::vector<NeedleTemplate> builtin_needles() {
    return {
        {"The good ways to spend time in campus include relax and do nothing.",
         "What are good ways to spend time in campus?", "Relax and do nothing."},
        {"The beneficial habits during Ph.D. career contain exercise and healthy diet.",
         "What habits are beneficial for health during Ph.D. career?", "Exercise and healthy diet."},
        {"Tom was born in 2005. Tom started high school fifteen years after he was born.",
         "Which year did Tom start high school?", "Tom started high school in 2020."},
    };
}

NeedleProbe insert_needle(const TokenSequence& haystack, const TokenSequence& needle, double depth) {
    KVB_CHECK(depth >= 0.0 && depth <= 1.0, "depth must lie in [0, 1]");
    KVB_CHECK(!needle.tokens.empty(), "needle is empty");
    KVB_CHECK(needle.size() < haystack.size(), "needle too long");
    KVB_CHECK(needle.vocab_size == haystack.vocab_size, "vocabulary mismatch");

    const auto n = haystack.size();
    const auto start = std::min<std::size_t>(static_cast<std::size_t>(std::llround(depth * static_cast<double>(n))), n);

    NeedleProbe probe;
    probe.depth = depth;
    probe.tokens.vocab_size = haystack.vocab_size;
    auto& t = probe.tokens.tokens;
    t.reserve(n + needle.size());
    t.insert(t.end(), haystack.tokens.begin(), haystack.tokens.begin() + static_cast<std::ptrdiff_t>(start));
    t.insert(t.end(), needle.tokens.begin(), needle.tokens.end());
    t.insert(t.end(), haystack.tokens.begin() + static_cast<std::ptrdiff_t>(start), haystack.tokens.end());
    probe.needle_span = IndexSet::range(start, start + needle.size());
    probe.answer_span = probe.needle_span;
    probe.question.vocab_size = haystack.vocab_size;
    return probe;
}

IndexSet locate_answer(const NeedleProbe& probe, const TokenSequence& answer) {
    const auto& t = probe.tokens.tokens;
    const auto first = probe.needle_span.front();
    const auto last = probe.needle_span.back() + 1;
    const auto& a = answer.tokens;
    if (!a.empty() && a.size() <= last - first) {
        for (std::size_t s = first; s + a.size() <= last; ++s) {
            if (std::equal(a.begin(), a.end(), t.begin() + static_cast<std::ptrdiff_t>(s)))
                return IndexSet::range(s, s + a.size());
        }
    }
    std::vector<std::size_t> hits;
    for (std::size_t p = first; p < last; ++p) {
        if (t[p] != kSeparatorToken && std::find(a.begin(), a.end(), t[p]) != a.end()) hits.push_back(p);
    }
    if (!hits.empty()) return IndexSet(std::move(hits));
    return probe.needle_span;
}

std::vector<std::size_t> ProbeGrid::standard_lengths() { return {1024, 2048, 3072, 4096, 5120, 6144}; }

std::vector<double> ProbeGrid::standard_depths() {
    std::vector<double> d;
    for (int pct = 2; pct <= 98; pct += 3) d.push_back(pct / 100.0);
    return d;
}

ProbeGrid ProbeGrid::standard() {
    ProbeGrid g;
    g.lengths = standard_lengths();
    g.depths = standard_depths();
    g.needles = {builtin_needles().front()};
    return g;
}

std::vector<NeedleProbe> build_probe_grid(const ProbeGrid& grid) {
    KVB_CHECK(!grid.lengths.empty() && !grid.depths.empty() && !grid.needles.empty(), "empty grid");
    check_vocab(grid.vocab_size);
    for (auto len : grid.lengths) KVB_CHECK(len > 0, "grid lengths must be positive");
    for (std::size_t i = 0; i < grid.depths.size(); ++i) {
        KVB_CHECK(grid.depths[i] >= 0.0 && grid.depths[i] <= 1.0, "grid depths must lie in [0, 1]");
        KVB_CHECK(i == 0 || grid.depths[i - 1] < grid.depths[i], "grid depths must be strictly increasing");
    }

    struct Encoded {
        TokenSequence needle, question, answer;
    };
    std::vector<Encoded> templates;
    for (const auto& nt : grid.needles) {
        templates.push_back({tokenize(nt.needle, grid.vocab_size), tokenize(nt.question, grid.vocab_size),
                             tokenize(nt.answer, grid.vocab_size)});
        KVB_CHECK(!templates.back().needle.tokens.empty(), "needle template has no tokens");
    }

    std::optional<TokenSequence> corpus;
    if (grid.haystack_text) corpus = tokenize(*grid.haystack_text, grid.vocab_size);

    const std::size_t longest = *std::max_element(grid.lengths.begin(), grid.lengths.end());
    const TokenSequence stream =
        corpus ? haystack_from_corpus(*corpus, longest) : synthesize_haystack(longest, grid.vocab_size, grid.seed);

    std::vector<NeedleProbe> probes;
    probes.reserve(grid.lengths.size() * grid.depths.size() * templates.size());
    for (auto len : grid.lengths) {
        for (std::size_t di = 0; di < grid.depths.size(); ++di) {
            for (std::size_t ti = 0; ti < templates.size(); ++ti) {
                const auto& tpl = templates[ti];
                KVB_CHECK(2 * tpl.needle.size() < len, "grid length " + std::to_string(len) + " too short for needle");
                TokenSequence haystack{{stream.tokens.begin(), stream.tokens.begin() +
                                                                   static_cast<std::ptrdiff_t>(len - tpl.needle.size())},
                                       grid.vocab_size};
                NeedleProbe p = insert_needle(haystack, tpl.needle, grid.depths[di]);
                p.question = tpl.question;
                p.answer_span = locate_answer(p, tpl.answer);
                p.probe_id = "len" + std::to_string(len) + "-d" + format_real(grid.depths[di]) + "-t" +
                             std::to_string(ti);
                probes.push_back(std::move(p));
            }
        }
    }
    return probes;
}

// Record: probe_id, length, depth, needle start:end, answer indices,
// vocab_size, question tokens, context tokens (tab separated).
std::string serialize_probes(std::span<const NeedleProbe> probes, const Metadata& meta) {
    std::string out = "# format = kvbudget-probes/1\n";
    append_metadata(out, meta);
    out += "# probe_count = " + std::to_string(probes.size()) + "\n";
    for (const auto& p : probes) {
        out += p.probe_id;
        out += '\t' + std::to_string(p.length());
        out += '\t' + format_real(p.depth);
        out += '\t' + std::to_string(p.needle_span.front()) + ':' + std::to_string(p.needle_span.back() + 1);
        out += '\t';
        for (std::size_t i = 0; i < p.answer_span.size(); ++i) {
            if (i) out += ',';
            out += std::to_string(p.answer_span.indices()[i]);
        }
        out += '\t' + std::to_string(p.tokens.vocab_size);
        out += '\t' + join_tokens(p.question.tokens);
        out += '\t' + join_tokens(p.tokens.tokens);
        out += '\n';
    }
    return out;
}

std::vector<NeedleProbe> parse_probes(std::string contents) {
    auto doc = parse_document(std::move(contents));
    std::vector<NeedleProbe> probes;
    for (const auto& [line_no, line] : doc.lines) {
        auto f = split(line, '\t');
        if (f.size() != 8) parse_fail(line_no, "expected 8 fields, found " + std::to_string(f.size()));
        NeedleProbe p;
        p.probe_id = std::string(f[0]);
        if (p.probe_id.empty()) parse_fail(line_no, "empty probe id");
        const auto length = parse_count(f[1], line_no);
        p.depth = parse_real(f[2], line_no);
        auto span = split(f[3], ':');
        if (span.size() != 2) parse_fail(line_no, "needle span must be start:end");
        const auto s = parse_count(span[0], line_no), e = parse_count(span[1], line_no);
        if (e <= s) parse_fail(line_no, "empty needle span");
        p.needle_span = IndexSet::range(s, e);
        try {
            p.answer_span = IndexSet(parse_indices(f[4], line_no));
        } catch (const Error&) {
            parse_fail(line_no, "answer indices must be strictly increasing");
        }
        const auto vocab = parse_count(f[5], line_no);
        p.question = {parse_tokens(f[6], line_no), vocab};
        p.tokens = {parse_tokens(f[7], line_no), vocab};
        if (p.tokens.size() != length) parse_fail(line_no, "token count does not match length");
        if (!p.needle_span.bounded_by(length)) parse_fail(line_no, "needle span out of range");
        for (auto i : p.answer_span)
            if (!p.needle_span.contains(i)) parse_fail(line_no, "answer span outside needle span");
        for (auto t : p.tokens.tokens)
            if (t >= vocab) parse_fail(line_no, "token id out of vocabulary");
        for (auto t : p.question.tokens)
            if (t >= vocab) parse_fail(line_no, "token id out of vocabulary");
        probes.push_back(std::move(p));
    }
    return probes;
}

void write_probes(const std::filesystem::path& path, std::span<const NeedleProbe> probes, const Metadata& meta) {
    write_file(path, serialize_probes(probes, meta));
}

std::vector<NeedleProbe> read_probes(const std::filesystem::path& path) { return parse_probes(read_file(path)); }

}  // namespace kvbudget
