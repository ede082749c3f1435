// Copyright (C) 2026 The kvbudget Authors
// SPDX-License-Identifier: Apache-2.0

#include "textio.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "error.hpp"

namespace kvbudget {

std::string format_real(double x) {
    KVB_CHECK(std::isfinite(x), "refusing to serialize a non-finite value");
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, end);
}

std::string format_reals(std::span<const double> xs, char sep) {
    std::string out;
    out.reserve(xs.size() * 20);
    char buf[32];
    for (std::size_t i = 0; i < xs.size(); ++i) {
        KVB_CHECK(std::isfinite(xs[i]), "refusing to serialize a non-finite value");
        if (i) out.push_back(sep);
        auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), xs[i]);
        out.append(buf, end);
    }
    return out;
}

void parse_fail(std::size_t line, const std::string& what) {
    throw Error(ErrorKind::Parse, "parse error at line " + std::to_string(line) + ": " + what);
}

double parse_real(std::string_view s, std::size_t line) {
    s = trim(s);
    double x = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
        parse_fail(line, "bad number '" + std::string(s) + "'");
    if (!std::isfinite(x)) parse_fail(line, "non-finite number");
    return x;
}

std::size_t parse_count(std::string_view s, std::size_t line) {
    s = trim(s);
    std::size_t x = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
        parse_fail(line, "bad count '" + std::string(s) + "'");
    return x;
}

std::vector<double> parse_reals(std::string_view s, char sep, std::size_t line) {
    std::vector<double> out;
    if (trim(s).empty()) return out;
    for (auto part : split(s, sep)) out.push_back(parse_real(part, line));
    return out;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\n";
    auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t x) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, x >>= 4) s[static_cast<std::size_t>(i)] = digits[x & 0xf];
    return s;
}

std::string file_digest(const std::filesystem::path& path) { return "fnv1a64:" + hex64(fnv1a64(read_file(path))); }

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error(ErrorKind::Io, "write to '" + path.string() + "' failed");
}

void append_metadata(std::string& out, const Metadata& meta) {
    for (const auto& [k, v] : meta) {
        out += "# ";
        out += k;
        out += " = ";
        out += v;
        out += '\n';
    }
}

const std::string* TextDocument::find(std::string_view key) const {
    auto it = meta.find(key);
    return it == meta.end() ? nullptr : &it->second;
}

TextDocument parse_document(std::string contents) {
    TextDocument doc;
    doc.storage = std::make_unique<const std::string>(std::move(contents));
    std::string_view all = *doc.storage;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < all.size()) {
        auto pos = all.find('\n', start);
        if (pos == std::string_view::npos) pos = all.size();
        std::string_view line = all.substr(start, pos - start);
        start = pos + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (trim(line).empty()) continue;
        if (line.front() == '#') {
            auto body = line.substr(1);
            auto eq = body.find('=');
            if (eq != std::string_view::npos)
                doc.meta.emplace(std::string(trim(body.substr(0, eq))), std::string(trim(body.substr(eq + 1))));
            continue;
        }
        doc.lines.emplace_back(line_no, line);
    }
    return doc;
}

}  // namespace kvbudget
