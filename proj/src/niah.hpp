// Copyright (C) 2026 The kvbudget Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "attention.hpp"
#include "textio.hpp"

namespace kvbudget {

using TokenId = std::uint32_t;

/// Id 0 ends a sentence; ids [1, vocab_size) are words.
inline constexpr TokenId kSeparatorToken = 0;
inline constexpr std::size_t kMinVocabSize = 4;

struct TokenSequence {
    std::vector<TokenId> tokens;
    std::size_t vocab_size = 0;

    std::size_t size() const noexcept { return tokens.size(); }
    bool operator==(const TokenSequence&) const = default;
};

/// Whitespace tokenizer: each word is lowercased, stripped of surrounding
/// punctuation and hashed into [1, vocab_size). Words ending in '.', '!' or '?'
/// are followed by a separator token.
TokenSequence tokenize(std::string_view text, std::size_t vocab_size);

/// Seeded filler text: sentences of 6 to 18 random word ids, each closed by
/// the separator. The stream is prefix-stable: a shorter haystack with the
/// same seed is a prefix of a longer one.
TokenSequence synthesize_haystack(std::size_t length, std::size_t vocab_size, std::uint64_t seed);

/// Repeats `corpus` cyclically up to `length` tokens.
TokenSequence haystack_from_corpus(const TokenSequence& corpus, std::size_t length);

struct NeedleTemplate {
    std::string needle;
    std::string question;
    std::string answer;
};

/// The three needle/question/answer triples used for the behavior probes.
std::vector<NeedleTemplate> builtin_needles();

struct NeedleProbe {
    std::string probe_id;
    TokenSequence tokens;
    IndexSet needle_span;
    double depth = 0.0;
    TokenSequence question;
    IndexSet answer_span;

    std::size_t length() const noexcept { return tokens.size(); }
    bool operator==(const NeedleProbe&) const = default;
};

/// Inserts `needle` before haystack position round(depth * |haystack|).
/// The resulting probe has |haystack| + |needle| tokens.
NeedleProbe insert_needle(const TokenSequence& haystack, const TokenSequence& needle, double depth);

/// Positions of the answer inside the needle span: the first contiguous
/// occurrence of the answer tokens, else needle positions whose word also
/// occurs in the answer, else the whole needle.
IndexSet locate_answer(const NeedleProbe& probe, const TokenSequence& answer);

struct ProbeGrid {
    std::vector<std::size_t> lengths;
    std::vector<double> depths;
    std::vector<NeedleTemplate> needles;
    std::uint64_t seed = 0;
    std::size_t vocab_size = 1024;
    /// Optional text to tokenize and use instead of synthetic filler.
    std::optional<std::string> haystack_text;

    /// 6 context lengths (1024..6144) x 33 depths (2%..98%, step 3%), first
    /// builtin needle.
    static ProbeGrid standard();
    static std::vector<std::size_t> standard_lengths();
    static std::vector<double> standard_depths();
};

/// One probe per (length, depth, template), length-major. Each probe has
/// exactly `length` tokens: the haystack is shortened by the needle size.
std::vector<NeedleProbe> build_probe_grid(const ProbeGrid& grid);

std::string serialize_probes(std::span<const NeedleProbe> probes, const Metadata& meta);
std::vector<NeedleProbe> parse_probes(std::string contents);

void write_probes(const std::filesystem::path& path, std::span<const NeedleProbe> probes, const Metadata& meta);
std::vector<NeedleProbe> read_probes(const std::filesystem::path& path);

}  // namespace kvbudget
