// Copyright (C) 2026 The kvbudget Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace kvbudget {

/// Ordered `key = value` pairs written as `# key = value` header lines.
using Metadata = std::vector<std::pair<std::string, std::string>>;

/// Shortest decimal that round-trips to the same double. Throws on NaN/Inf.
std::string format_real(double x);
std::string format_reals(std::span<const double> xs, char sep);

double parse_real(std::string_view s, std::size_t line);
std::size_t parse_count(std::string_view s, std::size_t line);
std::vector<double> parse_reals(std::string_view s, char sep, std::size_t line);

std::vector<std::string_view> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);

/// FNV-1a, 64 bit.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t x);
/// "fnv1a64:<16 hex digits>" of the file contents.
std::string file_digest(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

void append_metadata(std::string& out, const Metadata& meta);

/// A text artifact: `# key = value` header lines and the remaining data lines
/// with their 1-based line numbers. Blank lines and other comments are skipped.
struct TextDocument {
    std::map<std::string, std::string, std::less<>> meta;
    std::vector<std::pair<std::size_t, std::string_view>> lines;
    std::unique_ptr<const std::string> storage;

    const std::string* find(std::string_view key) const;
};

TextDocument parse_document(std::string contents);

[[noreturn]] void parse_fail(std::size_t line, const std::string& what);

}  // namespace kvbudget
