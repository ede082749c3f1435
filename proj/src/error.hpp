// Copyright (C) 2026 The kvbudget Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace kvbudget {

enum class ErrorKind {
    Domain,  // invalid arguments, shape mismatches, failed validation
    Parse,   // malformed input file
    Io,      // filesystem failure
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message) : std::runtime_error(message), m_kind(kind) {}

    ErrorKind kind() const noexcept { return m_kind; }

private:
    ErrorKind m_kind;
};

[[noreturn]] inline void fail(const std::string& message) { throw Error(ErrorKind::Domain, message); }

#define KVB_CHECK(cond, message)              \
    do {                                      \
        if (!(cond)) ::kvbudget::fail(message); \
    } while (0)

}  // namespace kvbudget
